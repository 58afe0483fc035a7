import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geolm.errors import DegenerateModelReduction, NumericalFailure
from geolm.linalg import solve_subproblem
from geolm.problem import ProblemDefinition, cost, eval_jacobian, eval_residuals
from geolm.step import propose_step
from geolm.suite import builtin_problems, get_problem
from geolm.trustregion import (Outcome, Status, TrustRegionConfig, initial_state, iterate,
                               model_reduction, next_delta, reduction_ratio, run)

from conftest import branch_cases, curved_problem


def test_model_reduction_examples():
    assert model_reduction(np.eye(2), np.array([1.0, 0.0]), np.zeros(2)) == 0.0
    assert model_reduction(np.eye(2), np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == 0.5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_gauss_newton_step_never_increases_model(seed):
    rng = np.random.default_rng(seed)
    J = rng.standard_normal((5, 3))
    r = rng.standard_normal(5)
    gn = np.linalg.lstsq(J, -r, rcond=None)[0]
    assert model_reduction(J, r, gn) >= -1e-12


def test_linear_rho_is_one(rng):
    s = get_problem("linear")
    th = np.array([3.0, -1.0])
    r, J = eval_residuals(s.problem, th), eval_jacobian(s.problem, th)
    for _ in range(5):
        step = rng.standard_normal(2)
        if model_reduction(J, r, step) <= 0:
            step = -step
        rho, _ = reduction_ratio(s.problem, th, step, J, r)
        assert rho == pytest.approx(1.0, abs=1e-12)


def test_rho_negative_on_cost_increase(rosen):
    th = np.array([-1.2, 1.0])
    r, J = eval_residuals(rosen, th), eval_jacobian(rosen, th)
    step = -np.linalg.solve(J.T @ J, J.T @ r)
    rho, _ = reduction_ratio(rosen, th, step, J, r)
    assert rho < 0


def test_rho_matches_recomputation(rosen):
    th = np.array([-1.2, 1.0])
    cfg = TrustRegionConfig(policy="lambda")
    state = dataclasses.replace(initial_state(rosen, th, cfg), lam=1.0)
    step = propose_step(rosen, state, cfg).step
    rho, r_trial = reduction_ratio(rosen, th, step, state.J, state.r)
    r0 = rosen.residual_fn(th)
    r1 = rosen.residual_fn(th + step)
    J = rosen.jacobian_fn(th)
    m0 = 0.5 * r0 @ r0
    m1 = 0.5 * (r0 + J @ step) @ (r0 + J @ step)
    ref = (0.5 * r0 @ r0 - 0.5 * r1 @ r1) / (m0 - m1)
    assert abs(rho - ref) <= 1e-12 * max(1.0, abs(ref))
    assert np.array_equal(r_trial, r1)


def test_degenerate_model_reduction():
    with pytest.raises(DegenerateModelReduction):
        reduction_ratio(get_problem("linear").problem, [1.0, 2.0], np.zeros(2), np.eye(4, 2),
                        np.zeros(4))


@pytest.mark.parametrize("case", branch_cases(), ids=lambda c: c[0])
def test_iterate_branches(case):
    _, problem, theta, delta, overrides, outcome, new_delta, moves, band = case
    cfg = TrustRegionConfig(**overrides)
    state = dataclasses.replace(initial_state(problem, theta, cfg), delta=delta)
    prop = propose_step(problem, state, cfg)
    new, rec = iterate(problem, state, cfg)
    assert rec.outcome.value == outcome
    assert new.delta == new_delta
    if band is None:
        assert rec.rho is None
    else:
        assert band[0] < rec.rho <= band[1] or (band[1] == 0.0 and rec.rho <= 0.0)
    expected_theta = state.theta + prop.step if moves else state.theta
    assert np.array_equal(new.theta, expected_theta)


def test_next_delta_arithmetic():
    cfg = TrustRegionConfig(delta_hat=5.0)
    assert next_delta(4.0, 0.1, 4.0, cfg) == 1.0
    assert next_delta(4.0, 0.9, 3.6, cfg) == 5.0
    assert next_delta(2.0, 0.9, 3.6, cfg) == 4.0
    assert next_delta(4.0, 0.9, 3.5, cfg) == 4.0
    assert next_delta(4.0, 0.5, 4.0, cfg) == 4.0


def test_lambda_policy_factors(rosen):
    cfg = TrustRegionConfig(policy="lambda", use_acceleration=False)
    state = initial_state(rosen, [-1.2, 1.0], cfg)
    state = dataclasses.replace(state, lam=1e-6)
    new, rec = iterate(rosen, state, cfg)
    assert rec.delta is None
    if rec.outcome is Outcome.ACCEPTED:
        assert new.lam == 1e-6 / 3.0
    else:
        assert new.lam == 1e-6 * 2.0
    state = dataclasses.replace(state, lam=1e3)
    new, rec = iterate(rosen, state, cfg)
    assert rec.outcome is Outcome.ACCEPTED and new.lam == 1e3 / 3.0


def test_trial_point_failure_is_a_rejection():
    def res(th):
        return np.array([th[0] - 1.0, np.nan if th[0] > 0.5 else 0.0])

    p = ProblemDefinition(1, 2, res, jacobian_fn=lambda th: np.array([[1.0], [0.0]]), name="cliff")
    cfg = TrustRegionConfig(delta0=10.0, delta_hat=100.0, use_acceleration=False)
    state = initial_state(p, [-8.0], cfg)
    new, rec = iterate(p, state, cfg)
    assert rec.outcome is Outcome.RHO_REJECTED
    assert np.array_equal(new.theta, state.theta)
    assert new.delta == 2.5


# -- full runs -----------------------------------------------------------------

def test_linear_run():
    s = get_problem("linear")
    for x0 in s.start_points:
        res = run(s.problem, x0, TrustRegionConfig(delta_hat=1e6))
        assert res.status is Status.GRADIENT
        assert res.grad_norm < 1e-10
        assert res.iterations <= 10
        assert all(r.rho == pytest.approx(1.0, abs=1e-12) for r in res.log)


@pytest.mark.parametrize("accel", [True, False])
def test_rosenbrock_run(accel):
    res = run(get_problem("rosenbrock").problem, [-1.2, 1.0],
              TrustRegionConfig(use_acceleration=accel))
    assert res.status is Status.GRADIENT
    assert np.allclose(res.theta, [1.0, 1.0], atol=1e-6)


def _suite_runs():
    for s in builtin_problems():
        for x0 in s.start_points:
            for accel in (False, True):
                for policy in ("delta", "lambda"):
                    cfg = TrustRegionConfig(use_acceleration=accel, policy=policy)
                    yield s, cfg, run(s.problem, x0, cfg)


SUITE_RUNS = None


def suite_runs():
    global SUITE_RUNS
    if SUITE_RUNS is None:
        SUITE_RUNS = list(_suite_runs())
    return SUITE_RUNS


def test_accepted_costs_strictly_decrease():
    for s, cfg, res in suite_runs():
        costs = [r.cost for r in res.log if r.outcome is Outcome.ACCEPTED] + [res.cost]
        assert all(b < a for a, b in zip(costs, costs[1:])), s.name


def test_radius_bounded_and_updated_by_allowed_factors():
    for s, cfg, res in suite_runs():
        if cfg.policy != "delta":
            continue
        deltas = [r.delta for r in res.log]
        assert max(deltas) <= cfg.delta_hat
        for a, b in zip(deltas, deltas[1:]):
            assert b in (0.25 * a, a, min(2 * a, cfg.delta_hat)), s.name


def test_no_alpha_rejections_without_acceleration():
    for s, cfg, res in suite_runs():
        if not cfg.use_acceleration:
            assert all(r.outcome is not Outcome.ALPHA_REJECTED for r in res.log)


def test_gradient_status_implies_gtol():
    for s, cfg, res in suite_runs():
        if res.status is Status.GRADIENT:
            assert res.grad_norm <= cfg.gtol


def test_counters_are_cumulative_and_monotone():
    for s, cfg, res in suite_runs():
        for a, b in zip(res.log, res.log[1:]):
            assert b.r_evals >= a.r_evals and b.j_evals >= a.j_evals and b.rpp_evals >= a.rpp_evals


def _classic_lm_lambdas(A, b, theta, delta, delta_hat, sigma=0.1):
    """Reference trust-region LM on linear residuals ``A theta - b``."""
    lams = []
    for _ in range(50):
        r = A @ theta - b
        g = A.T @ r
        if np.linalg.norm(g) <= 1e-8:
            break
        lam, step, _, _ = solve_subproblem(A, r, np.ones(A.shape[1]), delta)
        lams.append(lam)
        r_new = A @ (theta + step) - b
        pred = -(step @ g) - 0.5 * (A @ step) @ (A @ step)
        rho = (0.5 * r @ r - 0.5 * r_new @ r_new) / pred
        if rho < 0.25:
            delta = delta / 4
        elif rho > 0.75 and np.linalg.norm(step) >= (1 - sigma) * delta:
            delta = min(2 * delta, delta_hat)
        if rho > 0:
            theta = theta + step
    return lams


def test_reproduces_classic_lm_on_linear_problems():
    A = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
    b = A @ np.array([1.0, 2.0])
    for x0, d0 in (([0.0, 0.0], 0.1), ([10.0, -5.0], 1.0), ([40.0, 40.0], 0.5)):
        cfg = TrustRegionConfig(delta0=d0, use_acceleration=False)
        res = run(get_problem("linear").problem, x0, cfg)
        ref = _classic_lm_lambdas(A, b, np.array(x0), d0, cfg.delta_hat)
        got = [r.lam for r in res.log]
        assert len(got) == len(ref)
        assert np.allclose(got, ref, rtol=1e-10, atol=1e-10)


def test_budget_exhausted():
    res = run(get_problem("rosenbrock").problem, [-1.2, 1.0], TrustRegionConfig(max_iterations=2))
    assert res.status is Status.BUDGET
    assert res.iterations == 2


def test_initial_failure_reports_status():
    p = ProblemDefinition(1, 1, lambda th: np.array([np.nan]), name="nan")
    res = run(p, [0.0])
    assert res.status is Status.FAILURE


def test_start_at_minimum():
    res = run(get_problem("rosenbrock").problem, [1.0, 1.0])
    assert res.status is Status.GRADIENT and res.iterations == 0


def test_marquardt_scaling_run():
    s = get_problem("exp2")
    res = run(s.problem, s.start_points[0], TrustRegionConfig(scaling="marquardt"))
    assert res.status.converged
    assert res.cost < 1e-18


def test_curved_problem_converges_through_alpha_rejections():
    res = run(curved_problem(), [1.0], TrustRegionConfig(delta0=8.0))
    assert any(r.outcome is Outcome.ALPHA_REJECTED for r in res.log)
    assert res.status.converged
    assert abs(res.theta[0]) < 1e-6


def test_config_validation():
    with pytest.raises(ValueError):
        TrustRegionConfig(delta0=2.0, delta_hat=1.0)
    with pytest.raises(ValueError):
        TrustRegionConfig(alpha=0.0)
    with pytest.raises(ValueError):
        TrustRegionConfig(lambda_up=1.0)
