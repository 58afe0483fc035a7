"""Built-in test problems, CSV datasets and a brute-force step oracle."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from .errors import OracleNoConverge, ParseError, ShapeError
from .problem import ProblemDefinition, eval_jacobian, eval_residuals, cost, second_derivative_tensor


@dataclass(frozen=True)
class Dataset:
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if t.ndim != 1 or t.shape != y.shape:
            raise ShapeError(f"t and y must be equal-length vectors, got {t.shape} and {y.shape}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ShapeError("dataset contains non-finite values")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class SuiteProblem:
    problem: ProblemDefinition
    start_points: Tuple[np.ndarray, ...]
    tags: Tuple[str, ...] = ()
    known_minimum: Optional[Tuple[np.ndarray, float]] = None
    # minimum is only unique up to a permutation of the parameters
    permutation_symmetric: bool = False
    dataset: Optional[Dataset] = None
    model: Optional[str] = None

    @property
    def name(self):
        return self.problem.name

    def distance_to_minimum(self, theta):
        if self.known_minimum is None:
            raise ValueError(f"{self.name} has no known minimum")
        best = np.asarray(self.known_minimum[0])
        theta = np.asarray(theta, dtype=float)
        if self.permutation_symmetric:
            return float(np.linalg.norm(np.sort(theta) - np.sort(best)))
        return float(np.linalg.norm(theta - best))


# -- model families bound to datasets ---------------------------------------

def exp1_problem(data: Dataset, name="exp1") -> ProblemDefinition:
    """``r_m = exp(-k t_m) - y_m`` with a single rate ``k``."""
    t, y = data.t, data.y

    def residuals(theta):
        with np.errstate(over="ignore", invalid="ignore"):
            return np.exp(-theta[0] * t) - y

    def jacobian(theta):
        return (-t * np.exp(-theta[0] * t))[:, None]

    def second_dir(theta, v):
        return t * t * np.exp(-theta[0] * t) * v[0] ** 2

    return ProblemDefinition(1, t.size, residuals, jacobian, second_dir, name)


def exp2_problem(data: Dataset, name="exp2") -> ProblemDefinition:
    """Sum of two decays in log-rates: ``exp(-e^a t) + exp(-e^b t) - y``."""
    t, y = data.t, data.y

    def residuals(theta):
        with np.errstate(over="ignore", invalid="ignore"):
            k = np.exp(theta)
            return np.exp(-k[0] * t) + np.exp(-k[1] * t) - y

    def jacobian(theta):
        kt = np.exp(theta)[None, :] * t[:, None]
        return -kt * np.exp(-kt)

    def second_dir(theta, v):
        kt = np.exp(theta)[None, :] * t[:, None]
        return (kt * (kt - 1.0) * np.exp(-kt)) @ (v * v)

    return ProblemDefinition(2, t.size, residuals, jacobian, second_dir, name)


def line_problem(data: Dataset, name="line") -> ProblemDefinition:
    """Straight line ``a + b t - y``; linear in the parameters."""
    A = np.column_stack([np.ones_like(data.t), data.t])
    return linear_problem(A, data.y, name)


def linear_problem(A, b, name="linear") -> ProblemDefinition:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape

    return ProblemDefinition(
        n, m,
        residual_fn=lambda theta: A @ theta - b,
        jacobian_fn=lambda theta: A.copy(),
        second_dir_fn=lambda theta, v: np.zeros(m),
        name=name,
    )


MODELS: Dict[str, Tuple[int, Callable[..., ProblemDefinition]]] = {
    "exp1": (1, exp1_problem),
    "exp2": (2, exp2_problem),
    "line": (2, line_problem),
}


def rosenbrock_problem() -> ProblemDefinition:
    def residuals(theta):
        return np.array([10.0 * (theta[1] - theta[0] ** 2), 1.0 - theta[0]])

    def jacobian(theta):
        return np.array([[-20.0 * theta[0], 10.0], [-1.0, 0.0]])

    def second_dir(theta, v):
        return np.array([-20.0 * v[0] ** 2, 0.0])

    return ProblemDefinition(2, 2, residuals, jacobian, second_dir, "rosenbrock")


# -- registry ----------------------------------------------------------------

EXP1_RATE = 0.7
EXP2_LOG_RATES = (math.log(1.0), math.log(3.0))
LINEAR_SOLUTION = (1.0, 2.0)


def exp1_dataset():
    t = np.linspace(0.0, 4.0, 9)
    return Dataset(t, np.exp(-EXP1_RATE * t))


def exp2_dataset():
    t = np.linspace(0.0, 5.0, 21)
    k = np.exp(EXP2_LOG_RATES)
    return Dataset(t, np.exp(-k[0] * t) + np.exp(-k[1] * t))


def incompatible_dataset():
    # no straight line comes close to these points
    t = np.arange(6.0)
    return Dataset(t, np.array([5.0, -3.0, 4.0, -2.0, 6.0, -4.0]))


def _make_builtins() -> List[SuiteProblem]:
    A = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
    lin_star = np.array(LINEAR_SOLUTION)
    linear = SuiteProblem(
        linear_problem(A, A @ lin_star, "linear"),
        start_points=(np.array([0.0, 0.0]), np.array([10.0, -5.0])),
        tags=("linear",),
        known_minimum=(lin_star, 0.0),
    )

    rosen = SuiteProblem(
        rosenbrock_problem(),
        start_points=(np.array([-1.2, 1.0]),),
        tags=("canyon",),
        known_minimum=(np.array([1.0, 1.0]), 0.0),
    )

    d1 = exp1_dataset()
    exp1 = SuiteProblem(
        exp1_problem(d1, "exp1"),
        start_points=(np.array([0.1]), np.array([3.0])),
        tags=("small-curvature",),
        known_minimum=(np.array([EXP1_RATE]), 0.0),
        dataset=d1, model="exp1",
    )

    d2 = exp2_dataset()
    exp2 = SuiteProblem(
        exp2_problem(d2, "exp2"),
        start_points=(np.array([0.0, 0.1]), np.array([-1.0, 2.0]), np.array([1.0, 1.5])),
        tags=("canyon",),
        known_minimum=(np.array(EXP2_LOG_RATES), 0.0),
        permutation_symmetric=True,
        dataset=d2, model="exp2",
    )

    d3 = incompatible_dataset()
    big = line_problem(d3, "linear_incompatible")
    A3 = np.column_stack([np.ones_like(d3.t), d3.t])
    theta3 = np.linalg.lstsq(A3, d3.y, rcond=None)[0]
    incompatible = SuiteProblem(
        big,
        start_points=(np.array([0.0, 0.0]), np.array([10.0, 10.0])),
        tags=("large-residual", "linear", "small-curvature"),
        known_minimum=(theta3, cost(A3 @ theta3 - d3.y)),
        dataset=d3, model="line",
    )
    return sorted([linear, rosen, exp1, exp2, incompatible], key=lambda s: s.name)


_BUILTINS = _make_builtins()


def builtin_problems(tag: str | None = None) -> List[SuiteProblem]:
    """Built-in problems in lexicographic order, optionally filtered by tag."""
    return [s for s in _BUILTINS if tag is None or tag in s.tags]


def get_problem(name: str) -> SuiteProblem:
    for s in _BUILTINS:
        if s.name == name:
            return s
    raise KeyError(name)


# -- CSV datasets --------------------------------------------------------------

def read_dataset_csv(path) -> Dataset:
    """Read a ``t,y`` CSV file. Errors report 1-based file line numbers."""
    ts, ys = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if [h.strip() for h in header] != ["t", "y"]:
            raise ParseError(f"expected header 't,y', got {','.join(header)!r}", line=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"line {line}: expected 2 fields, got {len(row)}", line=line)
            try:
                t, y = float(row[0]), float(row[1])
            except ValueError:
                raise ParseError(f"line {line}: non-numeric entry {row!r}", line=line) from None
            if not (math.isfinite(t) and math.isfinite(y)):
                raise ParseError(f"line {line}: non-finite entry", line=line)
            ts.append(t)
            ys.append(y)
    return Dataset(np.array(ts), np.array(ys))


def write_dataset_csv(data: Dataset, path) -> None:
    """Write ``t,y`` with 17 significant digits so values round-trip exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("t,y\n")
        for t, y in zip(data.t, data.y):
            fh.write(f"{t:.17g},{y:.17g}\n")


def fit_problem_from_csv(model_name: str, path, start_points=None) -> SuiteProblem:
    """Bind a registry model to the dataset stored at ``path``."""
    if model_name not in MODELS:
        raise KeyError(f"unknown model {model_name!r}; choose from {sorted(MODELS)}")
    n_params, factory = MODELS[model_name]
    data = read_dataset_csv(path)
    if len(data) < n_params:
        raise ShapeError(f"model {model_name} needs at least {n_params} rows, got {len(data)}")
    if start_points is None:
        start_points = (np.full(n_params, 0.5) if model_name != "exp2" else np.array([0.0, 0.1]),)
    return SuiteProblem(
        factory(data, f"{model_name}:{Path(path).name}"),
        start_points=tuple(np.asarray(s, dtype=float) for s in start_points),
        tags=("data",),
        dataset=data, model=model_name,
    )


# -- constrained-step oracle -------------------------------------------------

def _quad(K, u, w):
    return np.einsum("mij,i,j->m", K, u, w)


def oracle_constrained_step(problem: ProblemDefinition, theta, lam, D=None,
                            seed=0, n_starts=8, tol=1e-14, K=None, return_info=False):
    """Directly minimize the damped quadratic-residual objective

        f(dt) = |r + J dt + 0.5 K[dt, dt]|^2 + lam |D dt|^2

    with derivative-free Nelder-Mead from several starts (zero, the LM step
    and random points), then polish by restarting the simplex around the
    incumbent on an exactly-shifted objective so tiny improvements are not
    lost to cancellation. ``K`` defaults to central finite differences.
    Intended for small N (at most 4).
    """
    theta = np.asarray(theta, dtype=float)
    n = problem.n_params
    if n > 4:
        raise ValueError("oracle is brute force; use at most 4 parameters")
    D = np.ones(n) if D is None else np.asarray(D, dtype=float)
    r = eval_residuals(problem, theta)
    J = eval_jacobian(problem, theta)
    if K is None:
        K = second_derivative_tensor(problem, theta, method="fd")

    def objective(dt):
        q = r + J @ dt + 0.5 * _quad(K, dt, dt)
        return q @ q + lam * np.sum((D * dt) ** 2)

    rng = np.random.default_rng(seed)
    g = J.T @ r
    lm = -np.linalg.solve(J.T @ J + lam * np.diag(D * D), g)
    scale = max(np.linalg.norm(lm), 1e-8)
    starts = [np.zeros(n), lm]
    while len(starts) < n_starts:
        starts.append(lm + scale * rng.standard_normal(n))

    best_x, best_f = None, np.inf
    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"xatol": 1e-10 * scale, "fatol": 1e-300,
                                "maxiter": 4000 * n, "maxfev": 8000 * n})
        if res.fun < best_f:
            best_x, best_f = res.x, res.fun

    center = best_x
    size = 1e-3 * scale
    gain = np.inf
    for _ in range(60):
        a = r + J @ center + 0.5 * _quad(K, center, center)
        B = J + np.einsum("mij,j->mi", K, center)
        pen = lam * D * D

        def shifted(e, a=a, B=B, c=center, pen=pen):
            d = B @ e + 0.5 * _quad(K, e, e)
            return d @ (2.0 * a + d) + pen @ ((2.0 * c + e) * e)

        simplex = np.vstack([np.zeros(n), size * np.eye(n)])
        res = minimize(shifted, np.zeros(n), method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": 1e-4 * size,
                                "fatol": 1e-300, "maxiter": 2000 * n, "maxfev": 4000 * n})
        gain = -res.fun
        shift = res.x if res.fun < 0 else np.zeros(n)
        center = center + shift
        moved = float(np.linalg.norm(shift))
        size = max(10.0 * moved, 1e-3 * size)
        if size < 1e-15 * max(np.linalg.norm(center), scale):
            break

    f_final = objective(center)
    converged = abs(gain) <= tol * max(f_final, 1.0)
    if not converged:
        raise OracleNoConverge(f"oracle still improving by {gain:g}")
    if return_info:
        return center, {"objective": f_final, "K": K}
    return center
