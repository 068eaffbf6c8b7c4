"""Synthetic distributed least-squares objectives with gradient oracles.

Agent i holds a Gaussian design block and noisy measurements of a
shared generating vector; its local objective is half the squared
residual norm.  Stochastic gradients add isotropic Gaussian noise on
top of the exact gradient.  All sampling runs through per-agent
counter-based streams so a problem and any trajectory over it are
reproducible regardless of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import spectral_norm
from .streams import ROLE_DESIGN, ROLE_MEASURE, ROLE_XSTAR, substream

__all__ = [
    "LeastSquaresProblem",
    "make_least_squares",
    "paper_preset",
    "desk_preset",
    "exact_gradient",
    "stochastic_gradient",
    "stochastic_oracle",
    "agent_objective",
    "global_objective",
    "global_optimum",
    "smoothness_constant",
    "heterogeneity_estimate",
]


@dataclass(frozen=True, eq=False)
class LeastSquaresProblem:
    """Per-agent design blocks A (n, N, d) and measurements b (n, N).

    b was generated as A @ x_star_gen plus N(0, sigma_s^2) noise under
    the stored seed; sigma_n is the stochastic-gradient noise level.
    """

    A: np.ndarray
    b: np.ndarray
    x_star_gen: np.ndarray
    sigma_s: float
    sigma_n: float
    seed: int

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def rows(self) -> int:
        return self.A.shape[1]

    @property
    def dim(self) -> int:
        return self.A.shape[2]

    def _block(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        if not 1 <= i <= self.n:
            raise ValueError(f"agent index {i} out of range [1, {self.n}]")
        return self.A[i - 1], self.b[i - 1]


def make_least_squares(
    n: int, N: int, d: int, sigma_s: float, sigma_n: float, seed: int = 0
) -> LeastSquaresProblem:
    """Generate a problem instance; identical seeds give identical data."""
    if min(n, N, d) < 1:
        raise ValueError(f"n, N, d must all be >= 1, got {(n, N, d)}")
    if sigma_s < 0 or sigma_n < 0:
        raise ValueError("noise levels must be nonnegative")
    x_star = substream(seed, ROLE_XSTAR).standard_normal(d)
    design = np.empty((n, N, d))
    measurements = np.empty((n, N))
    for agent in range(1, n + 1):
        block = substream(seed, ROLE_DESIGN, agent).standard_normal((N, d))
        noise = sigma_s * substream(seed, ROLE_MEASURE, agent).standard_normal(N)
        design[agent - 1] = block
        measurements[agent - 1] = block @ x_star + noise
    for arr in (design, measurements, x_star):
        arr.setflags(write=False)
    return LeastSquaresProblem(
        A=design,
        b=measurements,
        x_star_gen=x_star,
        sigma_s=float(sigma_s),
        sigma_n=float(sigma_n),
        seed=int(seed),
    )


def paper_preset(seed: int = 0) -> LeastSquaresProblem:
    """The benchmark-scale instance: n=258, d=10, N=50, sigma_s=0.1, sigma_n=5."""
    return make_least_squares(n=258, N=50, d=10, sigma_s=0.1, sigma_n=5.0, seed=seed)


def desk_preset(seed: int = 0) -> LeastSquaresProblem:
    """Small instance for fast checks: n=16, d=5, N=20."""
    return make_least_squares(n=16, N=20, d=5, sigma_s=0.1, sigma_n=1.0, seed=seed)


def exact_gradient(problem: LeastSquaresProblem, i: int, x) -> np.ndarray:
    """Gradient of agent i's objective at x: A_i^T (A_i x - b_i)."""
    block, measured = problem._block(i)
    return block.T @ (block @ np.asarray(x, float) - measured)


def stochastic_gradient(
    problem: LeastSquaresProblem, i: int, x, rng: np.random.Generator
) -> np.ndarray:
    """Exact gradient plus N(0, sigma_n^2 I) noise drawn from rng."""
    grad = exact_gradient(problem, i, x)
    if problem.sigma_n == 0.0:
        return grad
    return grad + problem.sigma_n * rng.standard_normal(problem.dim)


def stochastic_oracle(problem: LeastSquaresProblem):
    """The problem's gradient oracle in (point, agent, rng) form."""

    def oracle(point, agent: int, rng: np.random.Generator) -> np.ndarray:
        return stochastic_gradient(problem, agent, point, rng)

    return oracle


def agent_objective(problem: LeastSquaresProblem, i: int, x) -> float:
    block, measured = problem._block(i)
    residual = block @ np.asarray(x, float) - measured
    return 0.5 * float(residual @ residual)


def global_objective(problem: LeastSquaresProblem, x) -> float:
    """Mean of the agent objectives at a common point."""
    residual = problem.A @ np.asarray(x, float) - problem.b
    return 0.5 * float(np.einsum("in,in->", residual, residual)) / problem.n


def global_optimum(problem: LeastSquaresProblem) -> tuple[np.ndarray, float]:
    """Minimizer of the mean objective via the stacked normal equations."""
    gram = np.einsum("ink,inl->kl", problem.A, problem.A)
    rhs = np.einsum("ink,in->k", problem.A, problem.b)
    try:
        x_opt = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as err:
        raise ValueError(f"stacked normal equations are singular: {err}") from err
    return x_opt, global_objective(problem, x_opt)


def smoothness_constant(problem: LeastSquaresProblem) -> float:
    """Smoothness bound: the largest per-agent design Gram eigenvalue."""
    return max(spectral_norm(problem.A[i]) ** 2 for i in range(problem.n))


def heterogeneity_estimate(problem: LeastSquaresProblem, points) -> float:
    """Empirical gradient-heterogeneity bound over the given sample points.

    For each point this is the mean squared deviation of the agent
    gradients from their average; the estimate is the max over points.
    It is a lower bound on the true supremum and is reported as an
    estimate, never treated as the exact constant.
    """
    worst = 0.0
    for x in np.atleast_2d(np.asarray(points, float)):
        grads = np.einsum("ind,in->id", problem.A, problem.A @ x - problem.b)
        spread = grads - grads.mean(axis=0)
        worst = max(worst, float(np.einsum("id,id->", spread, spread)) / problem.n)
    return worst
