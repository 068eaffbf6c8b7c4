import math

import numpy as np
import pytest

from ceca.mixing import build_mixing
from ceca.optimizer import (
    RateParams,
    dsgd_ceca_step,
    init_optimizer,
    initial_global_average,
    rate_bound_terms,
    right_hand_side_bound,
    step_coefficients,
    theorem_rate,
)
from ceca.problems import make_least_squares, stochastic_oracle
from ceca.schedule import build_schedule
from ceca.streams import ROLE_INIT, gradient_stream, substream
from ceca.topology import ONE_PORT, TWO_PORT, comm_matrix


def _zero_oracle(point, agent, rng):
    return np.zeros_like(point)


def _initial_models(n, d, seed=7):
    return np.stack(
        [substream(seed, ROLE_INIT, a).standard_normal(d) for a in range(1, n + 1)]
    )


def test_step_coefficients_n6():
    schedule = build_schedule(6)
    c0 = step_coefficients(schedule, 0)
    assert (c0.a, c0.b, c0.delta_r) == (0.5, 0.0, 1)
    c1 = step_coefficients(schedule, 1)
    assert c1.a == pytest.approx(2 / 3) and c1.b == 0.5 and c1.delta_r == 0
    c2 = step_coefficients(schedule, 2)
    assert c2.a == 0.5 and c2.b == pytest.approx(0.4) and c2.delta_r == 1
    with pytest.raises(ValueError):
        step_coefficients(schedule, 3)


def test_zero_gradient_first_step_n6():
    # round 0 mixes the model with its predecessor's and overwrites the
    # auxiliary model with the received message
    x0 = _initial_models(6, 3)
    state = init_optimizer(x0, gamma=0.1)
    nxt = dsgd_ceca_step(state, _zero_oracle, build_schedule(6), TWO_PORT)
    received = x0[np.arange(-1, 5)]  # agent i hears from i-1
    np.testing.assert_allclose(nxt.x, 0.5 * x0 + 0.5 * received, atol=0)
    np.testing.assert_allclose(nxt.y, received, atol=0)
    assert nxt.k == 1


def test_identical_models_zero_gradients_are_a_fixed_point():
    common = np.array([1.5, -2.0, 0.25])
    x0 = np.tile(common, (6, 1))
    state = init_optimizer(x0, gamma=0.3)
    schedule = build_schedule(6)
    for _ in range(2 * schedule.tau):
        state = dsgd_ceca_step(state, _zero_oracle, schedule, TWO_PORT)
        np.testing.assert_allclose(state.x, x0, atol=0)
        np.testing.assert_allclose(state.y.mean(axis=0), common, atol=1e-15)


@pytest.mark.parametrize("mode", [TWO_PORT, ONE_PORT])
def test_stacked_form_equivalence(mode):
    # the per-agent update must match the block matrix form driven by
    # the same gradient streams
    n, d, seed, gamma = 6, 1, 13, 0.05
    schedule = build_schedule(n)
    problem = make_least_squares(n=n, N=6, d=d, sigma_s=0.1, sigma_n=0.4, seed=seed)
    oracle = stochastic_oracle(problem)

    x0 = _initial_models(n, d, seed=seed)
    state = init_optimizer(x0, gamma)
    x_mat, y_mat = x0.copy(), x0.copy()
    for k in range(3):
        state = dsgd_ceca_step(state, oracle, schedule, mode, seed=seed)

        r = k % schedule.tau
        pair = build_mixing(schedule, r, comm_matrix(schedule, r, mode))
        at = x_mat if schedule.delta[r] == 1 else y_mat
        evaluated = np.stack(
            [oracle(at[a - 1], a, gradient_stream(seed, a, k)) for a in range(1, n + 1)]
        )
        zeros = np.zeros_like(evaluated)
        top = evaluated if schedule.delta[r] == 1 else zeros
        bottom = evaluated if schedule.delta[r] == 0 else zeros
        stacked = pair.W @ np.vstack([x_mat, y_mat]) - gamma * (
            pair.Wg @ np.vstack([top, bottom])
        )
        x_mat, y_mat = stacked[:n], stacked[n:]

        assert np.max(np.abs(state.x - x_mat)) <= 1e-12
        assert np.max(np.abs(state.y - y_mat)) <= 1e-12


def test_one_gradient_per_agent_per_iteration():
    calls = []

    def counting_oracle(point, agent, rng):
        calls.append(agent)
        return np.zeros_like(point)

    schedule = build_schedule(5)
    state = init_optimizer(_initial_models(5, 2), gamma=0.1)
    for k in range(4):
        state = dsgd_ceca_step(state, counting_oracle, schedule, TWO_PORT)
        assert sorted(calls[-5:]) == [1, 2, 3, 4, 5]
    assert len(calls) == 20


def test_averaged_trajectory_identity():
    n, d, seed = 8, 3, 5
    schedule = build_schedule(n)
    problem = make_least_squares(n=n, N=10, d=d, sigma_s=0.1, sigma_n=1.0, seed=seed)
    base = stochastic_oracle(problem)
    evaluated = []

    def recording(point, agent, rng):
        grad = base(point, agent, rng)
        evaluated.append(grad)
        return grad

    state = init_optimizer(_initial_models(n, d, seed=seed), gamma=0.02)
    for k in range(60):
        state.gamma = 0.02 / 1.5 ** (k // 20)
        mean_before = state.x.mean(axis=0)
        state = dsgd_ceca_step(state, recording, schedule, ONE_PORT, seed=seed)
        mean_grad = np.mean(evaluated[-n:], axis=0)
        assert np.max(np.abs(state.x.mean(axis=0) - state.y.mean(axis=0))) <= 1e-12
        assert np.max(
            np.abs(state.x.mean(axis=0) - (mean_before - state.gamma * mean_grad))
        ) <= 1e-12


def test_same_seed_reproduces_trajectories_bitwise():
    n, d = 6, 2
    schedule = build_schedule(n)
    problem = make_least_squares(n=n, N=5, d=d, sigma_s=0.1, sigma_n=2.0, seed=1)
    oracle = stochastic_oracle(problem)

    def run():
        state = init_optimizer(_initial_models(n, d, seed=1), gamma=0.05)
        for _ in range(7):
            state = dsgd_ceca_step(state, oracle, schedule, TWO_PORT, seed=9)
        return state.x

    first, second = run(), run()
    assert np.array_equal(first, second)


def test_non_finite_gradient_aborts_with_diagnostics():
    def exploding(point, agent, rng):
        return np.full_like(point, np.nan if agent == 3 else 0.0)

    state = init_optimizer(_initial_models(6, 2), gamma=0.1)
    with pytest.raises(FloatingPointError, match=r"iteration 0.*3"):
        dsgd_ceca_step(state, exploding, build_schedule(6), TWO_PORT)


def test_initial_global_average():
    state = init_optimizer(np.array([[1.0], [2.0], [3.0]]), gamma=0.1)
    averaged = initial_global_average(state)
    np.testing.assert_allclose(averaged.x, 2.0, atol=0)
    np.testing.assert_allclose(averaged.y, averaged.x, atol=0)

    rng = np.random.default_rng(2)
    models = rng.standard_normal((6, 4))
    averaged = initial_global_average(init_optimizer(models, gamma=0.1))
    np.testing.assert_allclose(
        averaged.x, np.tile(models.mean(axis=0), (6, 1)), atol=1e-15
    )

    stepped = dsgd_ceca_step(averaged, _zero_oracle, build_schedule(6), TWO_PORT)
    with pytest.raises(ValueError):
        initial_global_average(stepped)


def test_init_optimizer_validation():
    with pytest.raises(ValueError):
        init_optimizer(np.ones(4), gamma=0.1)
    with pytest.raises(ValueError):
        init_optimizer(np.ones((1, 3)), gamma=0.1)


def _rate_oracle(Delta, L, sigma2, b2, T, n, tau):
    inv1 = math.sqrt(L * sigma2 * (T + 1) / (2 * n * Delta))
    inv2 = (24 * L**2 * tau**2 * (sigma2 + 2 * b2) * (T + 1) / Delta) ** (1 / 3)
    return 1.0 / (inv1 + inv2 + 8 * tau * L)


def _bound_oracle(Delta, L, sigma2, b2, T, n, tau):
    return (
        16 * math.sqrt(Delta * L * sigma2 / (n * (T + 1)))
        + 24 * (Delta**2 * L**2 * tau**2 * (sigma2 + 2 * b2) / (T + 1) ** 2) ** (1 / 3)
        + 32 * tau * Delta * L / (T + 1)
    )


def test_theorem_rate_worked_example():
    params = RateParams(Delta=1.0, L=1.0, sigma2=1.0, b2=0.0, T=0)
    gamma = theorem_rate(params, n=2, tau=1)
    assert gamma == pytest.approx(1.0 / (0.5 + 24 ** (1 / 3) + 8.0), rel=1e-12)
    assert gamma == pytest.approx(0.08784, abs=5e-6)


def test_rate_bound_worked_example():
    params = RateParams(Delta=1.0, L=1.0, sigma2=1.0, b2=0.0, T=99)
    bound = right_hand_side_bound(params, n=4, tau=2)
    assert bound == pytest.approx(0.8 + 24 * (4 / 10000) ** (1 / 3) + 0.64, rel=1e-12)
    assert bound == pytest.approx(3.2083, abs=5e-5)


def test_rate_formulas_match_independent_arithmetic():
    rng = np.random.default_rng(31)
    for _ in range(20):
        Delta = float(rng.uniform(0.1, 10))
        L = float(rng.uniform(0.1, 10))
        sigma2 = float(rng.uniform(0.0, 10))
        b2 = float(rng.uniform(0.0, 10))
        T = int(rng.integers(0, 10**6))
        n = int(rng.integers(2, 1000))
        tau = int(rng.integers(1, 12))
        params = RateParams(Delta=Delta, L=L, sigma2=sigma2, b2=b2, T=T)
        assert theorem_rate(params, n, tau) == pytest.approx(
            _rate_oracle(Delta, L, sigma2, b2, T, n, tau), rel=1e-12
        )
        assert right_hand_side_bound(params, n, tau) == pytest.approx(
            _bound_oracle(Delta, L, sigma2, b2, T, n, tau), rel=1e-12
        )


def test_theorem_rate_never_exceeds_the_deterministic_cap():
    rng = np.random.default_rng(37)
    for _ in range(50):
        params = RateParams(
            Delta=float(rng.uniform(0.01, 5)),
            L=float(rng.uniform(0.01, 5)),
            sigma2=float(rng.uniform(0, 5)),
            b2=float(rng.uniform(0, 5)),
            T=int(rng.integers(0, 10**9)),
        )
        tau = int(rng.integers(1, 10))
        assert theorem_rate(params, n=8, tau=tau) <= 1.0 / (8 * tau * params.L)


def test_theorem_rate_attains_cap_without_noise_or_heterogeneity():
    # both reciprocal terms vanish only when sigma2 = b2 = 0; the step
    # size then equals its deterministic cap at every horizon
    for T in (0, 10, 10**9):
        params = RateParams(Delta=2.0, L=3.0, sigma2=0.0, b2=0.0, T=T)
        assert theorem_rate(params, n=4, tau=2) == pytest.approx(
            1.0 / (8 * 2 * 3.0), rel=1e-12
        )


def test_theorem_rate_shrinks_with_horizon_under_noise():
    # with gradient noise the noise term grows like sqrt(T), so the
    # prescribed step size decays toward zero
    small = theorem_rate(RateParams(Delta=2.0, L=3.0, sigma2=1.0, b2=0.5, T=10), 4, 2)
    large = theorem_rate(
        RateParams(Delta=2.0, L=3.0, sigma2=1.0, b2=0.5, T=10**12), 4, 2
    )
    assert large < small
    assert large < 1e-4


def test_rate_bound_vanishes_at_infinite_horizon():
    params = RateParams(Delta=1.0, L=1.0, sigma2=1.0, b2=1.0, T=10**18)
    assert right_hand_side_bound(params, n=4, tau=2) < 1e-8


def test_rate_bound_linear_speedup_in_n():
    base = RateParams(Delta=1.0, L=1.0, sigma2=1.0, b2=0.0, T=10**6)
    first_n, _, _ = rate_bound_terms(base, n=16, tau=3)
    first_2n, _, _ = rate_bound_terms(base, n=32, tau=3)
    assert first_2n * math.sqrt(2) == pytest.approx(first_n, rel=1e-12)


def test_degenerate_rate_params_rejected():
    with pytest.raises(ValueError):
        theorem_rate(RateParams(Delta=0.0, L=1.0, sigma2=1.0, b2=0.0, T=10), 4, 2)
    with pytest.raises(ValueError):
        RateParams(Delta=1.0, L=0.0, sigma2=1.0, b2=0.0, T=10)
    with pytest.raises(ValueError):
        RateParams(Delta=-1.0, L=1.0, sigma2=1.0, b2=0.0, T=10)
    with pytest.raises(ValueError):
        RateParams(Delta=1.0, L=1.0, sigma2=1.0, b2=0.0, T=-1)
