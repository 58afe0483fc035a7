import numpy as np
import pytest

from geolm.problem import ProblemDefinition
from geolm.suite import builtin_problems, get_problem, linear_problem


def smooth_problems():
    """Builtin problems with curvature (the FD checks skip pure linear ones)."""
    return [s for s in builtin_problems() if "linear" not in s.tags]


def squares_problem():
    """r = (theta1^2, theta2^2): K[0,0,0] = K[1,1,1] = 2."""
    return ProblemDefinition(
        2, 2,
        residual_fn=lambda th: th ** 2,
        jacobian_fn=lambda th: np.diag(2 * th),
        second_dir_fn=lambda th, v: 2 * v ** 2,
        name="squares",
    )


def curved_problem(offset=10.0):
    """r = (theta, theta^2 + offset): strongly curved with a large residual."""
    return ProblemDefinition(
        1, 2,
        residual_fn=lambda th: np.array([th[0], th[0] ** 2 + offset]),
        jacobian_fn=lambda th: np.array([[1.0], [2 * th[0]]]),
        second_dir_fn=lambda th, v: np.array([0.0, 2 * v[0] ** 2]),
        name="curved",
    )


def log_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


FD_STEPS = np.logspace(-1, -4, 7)
ORDER_SLACK = 0.05


def fd_second_derivative_errors(problem, theta, v, scheme, hs=FD_STEPS):
    """FD-vs-analytic r'' errors and the rounding floor for each step.

    The floor ``8 eps |r| / h^2`` bounds cancellation error in the
    second difference; points under it carry no truncation information.
    """
    import dataclasses
    from geolm.problem import FDConfig, eval_jacobian, eval_residuals, second_directional_derivative

    stripped = dataclasses.replace(problem, second_dir_fn=None)
    J = eval_jacobian(problem, theta)
    exact = second_directional_derivative(problem, theta, v)
    errs = np.array([
        np.linalg.norm(second_directional_derivative(
            stripped, theta, v, J, FDConfig(accel_scheme=scheme, accel_step=h)) - exact)
        for h in hs])
    rnorm = np.linalg.norm(eval_residuals(problem, theta)) + np.linalg.norm(exact)
    floor = 8 * np.finfo(float).eps * rnorm / hs ** 2
    return exact, errs, floor


def observed_order(hs, errs, floor):
    """Fitted log-log slope over the steps whose error clears the rounding floor."""
    keep = errs > 10 * floor
    if keep.sum() < 3:
        return None
    return log_slope(hs[keep], errs[keep])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def rosen():
    return get_problem("rosenbrock").problem


@pytest.fixture
def lin2():
    """r(theta) = theta - (1, 2)."""
    return linear_problem(np.eye(2), np.array([1.0, 2.0]), "shift")


def branch_cases():
    """Instances that drive one iteration through each radius-update branch.

    Each entry: (label, problem, theta, delta, config overrides, expected
    outcome, expected new delta, whether theta moves, rho band).
    """
    rosen = get_problem("rosenbrock").problem
    lin = get_problem("linear").problem
    plain = {"use_acceleration": False}
    start = [-1.2, 1.0]
    return [
        ("alpha-reject", curved_problem(), [1.0], 8.0, {}, "AlphaRejected", 2.0, False, None),
        ("rho>3/4 boundary", rosen, start, 0.3, plain, "AcceptedStep", 0.6, True, (0.75, 1.5)),
        ("rho>3/4 boundary capped", rosen, start, 0.3, dict(plain, delta0=0.3, delta_hat=0.5),
         "AcceptedStep", 0.5, True, (0.75, 1.5)),
        ("rho>3/4 interior", lin, [0.0, 0.0], 10.0, plain, "AcceptedStep", 10.0, True, (0.999, 1.001)),
        ("1/4<=rho<=3/4", rosen, start, 1.0, plain, "AcceptedStep", 1.0, True, (0.25, 0.75)),
        ("0<rho<1/4", rosen, start, 1.375, plain, "AcceptedStep", 0.34375, True, (0.0, 0.25)),
        ("rho<=0", rosen, start, 2.0, plain, "RhoRejected", 0.5, False, (-np.inf, 0.0)),
    ]


def lemma1_monte_carlo(n_samples, seed=0, alpha=0.75, zeta=1.5):
    """Sample (problem, theta, lam, delta) instances with D = I.

    Returns counts: hypothesis hits, implication violations, and
    violations of the two intermediate step bounds.
    """
    from geolm.diagnostics import estimate_kappa, lemma1_check, step_bounds
    from geolm.problem import eval_jacobian, eval_residuals, second_directional_derivative
    from geolm.step import acceleration_step, velocity_step

    rng = np.random.default_rng(seed)
    problems = builtin_problems()
    hits = violations = bound_violations = 0
    for i in range(n_samples):
        s = problems[i % len(problems)]
        p = s.problem
        theta = s.start_points[0] + rng.normal(scale=0.5, size=p.n_params)
        lam = 10 ** rng.uniform(-3, 4)
        delta = 10 ** rng.uniform(-4, 1)
        r, J = eval_residuals(p, theta), eval_jacobian(p, theta)
        v = velocity_step(J, r, lam)
        a = acceleration_step(J, lam, None, second_directional_derivative(p, theta, v, J))
        nv = np.linalg.norm(v)
        # the sampled bound must also cover the direction actually taken
        kappa = estimate_kappa(p, theta, 16, seed=i, extra_directions=[v] if nv > 0 else ())
        hyp, concl = lemma1_check(J, r, kappa, alpha, zeta, delta, v, a)
        hits += hyp
        violations += hyp and not concl
        b1, b2 = step_bounds(J, r, kappa, lam, v, a)
        bound_violations += (not b1) + (not b2)
    return hits, violations, bound_violations


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, title, ok, detail)``."""
    lines = request.config._acceptance_lines

    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
