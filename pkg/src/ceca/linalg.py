"""Dense spectral-norm estimation via power iteration."""

from __future__ import annotations

import numpy as np

__all__ = ["PowerIterationError", "spectral_norm"]


class PowerIterationError(RuntimeError):
    """Raised when the iteration cap is hit; carries the last estimate."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


def spectral_norm(matrix, rel_tol: float = 1e-9, max_iter: int = 20000) -> float:
    """Largest singular value of a dense matrix.

    Runs power iteration on the Gram matrix with a deterministic start
    vector.  Convergence is declared when the geometric extrapolation
    of the (monotone) Rayleigh-quotient increments falls below
    rel_tol relative to the current estimate; the estimate approaches
    the true value from below.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("matrix entries must be finite")
    if m.shape[0] >= m.shape[1]:
        gram = m.T @ m
    else:
        gram = m @ m.T
    dim = gram.shape[0]
    rng = np.random.Generator(np.random.Philox(0x5CA1AB1E))
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    top = 0.0
    prev_gain: float | None = None
    for iteration in range(max_iter):
        applied = gram @ vec
        norm = np.linalg.norm(applied)
        if norm == 0.0:
            return 0.0
        new_top = float(vec @ applied)
        gain = new_top - top
        if iteration > 0 and gain <= rel_tol * new_top * 1e-3:
            return float(np.sqrt(max(new_top, 0.0)))
        if prev_gain is not None and 0.0 < gain < prev_gain:
            # Increments shrink geometrically; bound the remaining sum.
            ratio = gain / prev_gain
            remaining = gain * ratio / (1.0 - ratio)
            if remaining <= rel_tol * new_top:
                return float(np.sqrt(max(new_top, 0.0)))
        top = new_top
        prev_gain = gain if iteration > 0 else None
        vec = applied / norm
    raise PowerIterationError(
        f"power iteration did not reach rel_tol={rel_tol} in {max_iter} steps",
        estimate=float(np.sqrt(max(top, 0.0))),
    )
