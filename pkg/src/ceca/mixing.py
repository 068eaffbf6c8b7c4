"""Block mixing matrices for one optimizer step, and their structure checks.

Each communication round induces a 2n x 2n model mixing matrix and a
gradient mixing matrix acting on the stacked (model, auxiliary-model)
vector.  The matrices are row stochastic but not column stochastic;
what replaces double stochasticity is a block structure (every n x n
block is a nonnegative scaled doubly stochastic matrix, with the two
scalings in each block row summing to 1).  This module builds the
matrices and verifies that structure, the sqrt(2) operator-norm bound,
commutation with the block averaging projector, closure of the family
under products, and the closed forms of cumulative round products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import PowerIterationError, spectral_norm
from .schedule import BinarySchedule
from .topology import CommMatrix, comm_matrix

__all__ = [
    "MixingPair",
    "FamilyCheckReport",
    "build_mixing",
    "verify_family",
    "operator_norm",
    "product_consensus",
    "product_form_first_cycle",
    "product_form_stationary",
    "semigroup_check",
    "commutation_check",
    "PowerIterationError",
]


@dataclass(frozen=True, eq=False)
class MixingPair:
    """Model and gradient mixing matrices for one round."""

    W: np.ndarray
    Wg: np.ndarray
    r: int
    delta_r: int


def build_mixing(schedule: BinarySchedule, r: int, P: CommMatrix) -> MixingPair:
    """Assemble the round-r mixing pair from its communication matrix.

    With m = nr[r] and the round permutation P: a bit of 1 mixes the
    model block as (I + P)/2 and routes (m+1)/(2m+1) of the received
    message into the auxiliary block; a bit of 0 mirrors the roles.
    """
    if P.n != schedule.n:
        raise ValueError(
            f"communication matrix is {P.n}x{P.n} but the schedule has n={schedule.n}"
        )
    if P.round != r:
        raise ValueError(f"communication matrix built for round {P.round}, not {r}")
    if not 0 <= r < schedule.tau:
        raise ValueError(f"round {r} out of range [0, {schedule.tau})")
    n = schedule.n
    m = schedule.nr[r]
    perm = P.entries.astype(float)
    eye = np.eye(n)
    zero = np.zeros((n, n))
    half_mix = 0.5 * eye + 0.5 * perm
    give = (m + 1) / (2 * m + 1)
    keep = m / (2 * m + 1)
    if schedule.delta[r] == 1:
        W = np.block([[half_mix, zero], [give * perm, keep * eye]])
        Wg = np.block([[half_mix, zero], [keep * eye + give * perm, zero]])
    else:
        W = np.block([[give * eye, keep * perm], [zero, half_mix]])
        Wg = np.block([[zero, give * eye + keep * perm], [zero, half_mix]])
    W.setflags(write=False)
    Wg.setflags(write=False)
    return MixingPair(W=W, Wg=Wg, r=r, delta_r=schedule.delta[r])


@dataclass(frozen=True)
class FamilyCheckReport:
    """Outcome of the block-structure check.

    block_scalars holds the recovered row-sum scalars (c, d) of the two
    left blocks; the right blocks must then sum to 1 - c and 1 - d.
    residual is the worst deviation seen across all checks.
    """

    row_stochastic: bool
    block_scalars: tuple[float, float]
    blocks_doubly_stochastic_after_rescale: bool
    nonnegative: bool
    residual: float

    @property
    def passed(self) -> bool:
        return (
            self.row_stochastic
            and self.blocks_doubly_stochastic_after_rescale
            and self.nonnegative
        )


def verify_family(M, tol: float = 1e-12) -> FamilyCheckReport:
    """Check the scaled-doubly-stochastic block structure of a 2n x 2n matrix.

    Recovers c (resp. d) as the common row sum of the top-left (resp.
    bottom-left) block, then requires every block's row sums and
    column sums to equal its scalar within tol.  Together with
    nonnegativity this certifies each block is a nonnegative multiple
    of a doubly stochastic matrix, which is exact for the convex
    combinations of permutations this package builds.
    """
    mat = np.asarray(M, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] % 2:
        raise ValueError(f"expected a square even-dimension matrix, got {mat.shape}")
    n = mat.shape[0] // 2
    lowest = float(mat.min())
    nonnegative = lowest >= -tol
    row_residual = float(np.max(np.abs(mat.sum(axis=1) - 1.0)))
    row_stochastic = row_residual <= tol

    top_left = mat[:n, :n]
    top_right = mat[:n, n:]
    bottom_left = mat[n:, :n]
    bottom_right = mat[n:, n:]
    c = float(top_left.sum(axis=1).mean())
    d = float(bottom_left.sum(axis=1).mean())

    block_residual = 0.0
    for block, scalar in (
        (top_left, c),
        (top_right, 1.0 - c),
        (bottom_left, d),
        (bottom_right, 1.0 - d),
    ):
        row_dev = float(np.max(np.abs(block.sum(axis=1) - scalar)))
        col_dev = float(np.max(np.abs(block.sum(axis=0) - scalar)))
        block_residual = max(block_residual, row_dev, col_dev)
    blocks_ok = block_residual <= tol

    residual = max(row_residual, block_residual, max(0.0, -lowest))
    return FamilyCheckReport(
        row_stochastic=row_stochastic,
        block_scalars=(c, d),
        blocks_doubly_stochastic_after_rescale=blocks_ok,
        nonnegative=nonnegative,
        residual=residual,
    )


def operator_norm(M) -> float:
    """Spectral norm via power iteration on the Gram matrix.

    Accurate to relative tolerance 1e-9 (the estimate approaches from
    below).  Raises PowerIterationError, carrying the last estimate,
    if the iteration cap is hit.
    """
    return spectral_norm(M, rel_tol=1e-9)


def product_consensus(schedule: BinarySchedule, mode: str, t: int) -> np.ndarray:
    """Product of the mixing matrices for iterations 0..t.

    Iteration k uses round k mod tau; factors accumulate on the left,
    so the result is W(t) @ W(t-1) @ ... @ W(0).  After the first
    tau rounds the product collapses to the consensus closed forms
    (see product_form_first_cycle / product_form_stationary).
    """
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    n = schedule.n
    product = np.eye(2 * n)
    for k in range(t + 1):
        r = k % schedule.tau
        pair = build_mixing(schedule, r, comm_matrix(schedule, r, mode))
        product = pair.W @ product
    return product


def product_form_first_cycle(n: int) -> np.ndarray:
    """Expected product after rounds 0..tau-1.

    Top-left block averages everything; bottom-left holds the
    leave-one-out average; the right half is zero.
    """
    ones = np.ones((n, n))
    top = ones / n
    bottom = (ones - np.eye(n)) / (n - 1)
    zero = np.zeros((n, n))
    return np.block([[top, zero], [bottom, zero]])


def product_form_stationary(n: int) -> np.ndarray:
    """Expected product once t >= tau: both left blocks average everything."""
    ones = np.ones((n, n))
    top = ones / n
    zero = np.zeros((n, n))
    return np.block([[top, zero], [top, zero]])


def semigroup_check(A, B, tol: float = 1e-12) -> bool:
    """True when the product of two family matrices is again in the family."""
    return verify_family(np.asarray(A, float) @ np.asarray(B, float), tol=tol).passed


def commutation_check(M) -> float:
    """Worst-entry residual of commuting M with the block averaging projector.

    The projector is blockdiag(ones/n, ones/n); family matrices commute
    with it exactly, so the residual should sit at rounding level.
    """
    mat = np.asarray(M, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] % 2:
        raise ValueError(f"expected a square even-dimension matrix, got {mat.shape}")
    n = mat.shape[0] // 2
    averager = np.ones((n, n)) / n
    zero = np.zeros((n, n))
    projector = np.block([[averager, zero], [zero, averager]])
    return float(np.max(np.abs(mat @ projector - projector @ mat)))
