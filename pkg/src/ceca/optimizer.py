"""Decentralized SGD with one exact-consensus communication round per step.

Each agent keeps a local model and an auxiliary model.  At iteration k
the schedule bit of round k mod tau decides which of the two is
differentiated and communicated; the agent then takes a local SGD step
and convex-combines it with the message received from one neighbor.
Cycling through the schedule restores exact averaging every tau
iterations, so the mean trajectory is exactly centralized SGD on the
evaluated gradients.

Also provides the closed-form step size and convergence-rate bound
helpers used by the experiment drivers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import BinarySchedule
from .streams import gradient_stream
from .topology import normalize_mode, recv_sources

__all__ = [
    "OptimizerState",
    "StepCoefficients",
    "RateParams",
    "TrajectoryRow",
    "init_optimizer",
    "step_coefficients",
    "dsgd_ceca_step",
    "initial_global_average",
    "trajectory_row",
    "trajectory_csv",
    "theorem_rate",
    "right_hand_side_bound",
    "rate_bound_terms",
]


@dataclass(eq=False)
class OptimizerState:
    """Stacked local models x, auxiliary models y (both n x d), step count, step size.

    y starts equal to x; the row means of x and y coincide at every
    iteration.  gamma may be reassigned between steps to implement a
    learning-rate schedule.
    """

    x: np.ndarray
    y: np.ndarray
    k: int
    gamma: float


def init_optimizer(x0, gamma: float) -> OptimizerState:
    """Fresh state at iteration 0 with the auxiliary models copying x0."""
    x = np.array(x0, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"initial models must be (n, d), got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 agents, got {x.shape[0]}")
    return OptimizerState(x=x, y=x.copy(), k=0, gamma=float(gamma))


@dataclass(frozen=True)
class StepCoefficients:
    """Convex-combination weights of one step.

    a weights the agent's own updated model against the received
    message in the x update; b does the same for y.  A round bit of 1
    gives (1/2, m/(2m+1)); a bit of 0 gives ((m+1)/(2m+1), 1/2), with
    m the round's window size.
    """

    a: float
    b: float
    delta_r: int
    r: int


def step_coefficients(schedule: BinarySchedule, r: int) -> StepCoefficients:
    if not 0 <= r < schedule.tau:
        raise ValueError(f"round {r} out of range [0, {schedule.tau})")
    m = schedule.nr[r]
    if schedule.delta[r] == 1:
        a, b = 0.5, m / (2 * m + 1)
    else:
        a, b = (m + 1) / (2 * m + 1), 0.5
    return StepCoefficients(a=a, b=b, delta_r=schedule.delta[r], r=r)


def dsgd_ceca_step(
    state: OptimizerState,
    oracle,
    schedule: BinarySchedule,
    mode: str,
    seed: int = 0,
) -> OptimizerState:
    """Advance one iteration; returns a new state.

    oracle(point, agent, rng) must return the agent's stochastic
    gradient (a d-vector) at the given point; it is called exactly once
    per agent.  The rng handed to the oracle is the per-(agent,
    iteration) stream derived from seed, so identical seeds reproduce
    trajectories bitwise.  Raises FloatingPointError when any gradient
    comes back non-finite.
    """
    mode = normalize_mode(mode)
    n, d = state.x.shape
    if n != schedule.n:
        raise ValueError(f"state has {n} agents but schedule has n={schedule.n}")
    r = state.k % schedule.tau
    coeffs = step_coefficients(schedule, r)
    source_side = state.x if coeffs.delta_r == 1 else state.y

    grads = np.empty_like(state.x)
    for agent0 in range(n):
        rng = gradient_stream(seed, agent0 + 1, state.k)
        grads[agent0] = oracle(source_side[agent0], agent0 + 1, rng)
    if not np.isfinite(grads).all():
        bad = np.unique(np.nonzero(~np.isfinite(grads))[0]) + 1
        raise FloatingPointError(
            f"non-finite gradient at iteration {state.k} from agent(s) "
            f"{bad[:8].tolist()}"
        )

    adjust = state.gamma * grads
    x_stepped = state.x - adjust
    y_stepped = state.y - adjust
    message = x_stepped if coeffs.delta_r == 1 else y_stepped
    received = message[recv_sources(schedule, r, mode)]
    x_next = coeffs.a * x_stepped + (1.0 - coeffs.a) * received
    y_next = coeffs.b * y_stepped + (1.0 - coeffs.b) * received
    return OptimizerState(x=x_next, y=y_next, k=state.k + 1, gamma=state.gamma)


def initial_global_average(state: OptimizerState) -> OptimizerState:
    """Replace every row of x and y by the global row mean.

    Only valid before the first step; used by runs that start from a
    globally averaged model.
    """
    if state.k != 0:
        raise ValueError(f"global pre-averaging only applies at k=0, got k={state.k}")
    n = state.x.shape[0]
    x_mean = np.broadcast_to(state.x.mean(axis=0), state.x.shape).copy()
    y_mean = np.broadcast_to(state.y.mean(axis=0), state.y.shape).copy()
    return OptimizerState(x=x_mean, y=y_mean, k=0, gamma=state.gamma)


@dataclass(frozen=True)
class TrajectoryRow:
    """One line of the optimizer trajectory log.

    objective and grad_norm_sq are evaluated at the mean model by the
    caller (the optimizer itself only sees a gradient oracle);
    comm_scalars counts the one d-vector each agent has sent per
    completed iteration.
    """

    k: int
    r: int
    delta_r: int
    objective: float
    grad_norm_sq: float
    consensus_dev: float
    comm_scalars: int


def trajectory_row(
    state: OptimizerState,
    schedule: BinarySchedule,
    objective: float,
    mean_gradient,
) -> TrajectoryRow:
    """Log line for the current state; see TrajectoryRow."""
    r = state.k % schedule.tau
    grad = np.asarray(mean_gradient, dtype=float)
    deviation = float(np.linalg.norm(state.x - state.x.mean(axis=0)))
    return TrajectoryRow(
        k=state.k,
        r=r,
        delta_r=schedule.delta[r],
        objective=float(objective),
        grad_norm_sq=float(grad @ grad),
        consensus_dev=deviation,
        comm_scalars=state.x.shape[1] * state.k,
    )


def trajectory_csv(rows) -> str:
    """Render trajectory rows as CSV with 17-significant-digit floats."""
    lines = ["k,r,delta_r,objective,grad_norm_sq,consensus_dev,comm_scalars"]
    for row in rows:
        lines.append(
            f"{row.k},{row.r},{row.delta_r},"
            f"{format(row.objective, '.17g')},{format(row.grad_norm_sq, '.17g')},"
            f"{format(row.consensus_dev, '.17g')},{row.comm_scalars}"
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RateParams:
    """Problem constants entering the step-size and rate formulas.

    Delta is the initial optimality gap of the averaged model, L the
    smoothness constant, sigma2 the gradient-noise variance, b2 the
    gradient-heterogeneity bound, T the iteration horizon.
    """

    Delta: float
    L: float
    sigma2: float
    b2: float
    T: int

    def __post_init__(self) -> None:
        if self.L <= 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if min(self.Delta, self.sigma2, self.b2) < 0:
            raise ValueError("Delta, sigma2, b2 must be nonnegative")
        if self.T < 0:
            raise ValueError(f"T must be nonnegative, got {self.T}")


def theorem_rate(params: RateParams, n: int, tau: int) -> float:
    """Closed-form step size for a horizon-T run.

    gamma = 1 / (sqrt(L sigma2 (T+1) / (2 n Delta))
                 + cbrt(24 L^2 tau^2 (sigma2 + 2 b2) (T+1) / Delta)
                 + 8 tau L)

    Always at most 1 / (8 tau L).  Rejects Delta = 0, where the
    division structure degenerates.
    """
    if n < 1 or tau < 1:
        raise ValueError(f"need n >= 1 and tau >= 1, got n={n}, tau={tau}")
    if params.Delta == 0:
        raise ValueError("Delta = 0 makes the step-size formula degenerate")
    horizon = params.T + 1
    inv_first = np.sqrt(params.L * params.sigma2 * horizon / (2 * n * params.Delta))
    inv_second = np.cbrt(
        24 * params.L**2 * tau**2 * (params.sigma2 + 2 * params.b2) * horizon
        / params.Delta
    )
    return float(1.0 / (inv_first + inv_second + 8 * tau * params.L))


def rate_bound_terms(params: RateParams, n: int, tau: int) -> tuple[float, float, float]:
    """The three summands of the convergence-rate bound.

    Term 1 is the linear-speedup noise term, term 2 the topology
    penalty, term 3 the deterministic transient term.
    """
    if n < 1 or tau < 1:
        raise ValueError(f"need n >= 1 and tau >= 1, got n={n}, tau={tau}")
    horizon = params.T + 1
    first = 16 * np.sqrt(params.Delta * params.L * params.sigma2 / (n * horizon))
    second = 24 * np.cbrt(
        params.Delta**2 * params.L**2 * tau**2 * (params.sigma2 + 2 * params.b2)
        / horizon**2
    )
    third = 32 * tau * params.Delta * params.L / horizon
    return float(first), float(second), float(third)


def right_hand_side_bound(params: RateParams, n: int, tau: int) -> float:
    """Convergence-rate upper bound for the theorem_rate step size."""
    return float(sum(rate_bound_terms(params, n, tau)))
