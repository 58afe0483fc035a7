"""Residual problems, evaluation counting and finite-difference derivatives.

A least-squares problem is a residual map ``r: R^N -> R^M`` with cost
``C = 0.5 * |r|^2``.  The Jacobian ``J[m, mu] = d r_m / d theta_mu`` and the
directional second derivative ``r''_m = sum K[m, mu, nu] v_mu v_nu`` may be
supplied analytically; otherwise they are estimated by finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NumericalFailure, ShapeError

ResidualFn = Callable[[np.ndarray], np.ndarray]
JacobianFn = Callable[[np.ndarray], np.ndarray]
SecondDirFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemDefinition:
    n_params: int
    n_residuals: int
    residual_fn: ResidualFn
    jacobian_fn: Optional[JacobianFn] = None
    second_dir_fn: Optional[SecondDirFn] = None
    name: str = "problem"

    def __post_init__(self):
        if self.n_params < 1 or self.n_residuals < 1:
            raise ShapeError("n_params and n_residuals must be positive")


@dataclass
class EvaluationCounters:
    """Per-run evaluation counts. Never shared between runs."""

    residual_evals: int = 0
    jacobian_evals: int = 0
    second_deriv_evals: int = 0

    def copy(self) -> "EvaluationCounters":
        return EvaluationCounters(self.residual_evals, self.jacobian_evals,
                                  self.second_deriv_evals)

    def as_dict(self) -> dict:
        return {
            "residual_evals": self.residual_evals,
            "jacobian_evals": self.jacobian_evals,
            "second_deriv_evals": self.second_deriv_evals,
        }


@dataclass(frozen=True)
class FDConfig:
    """Finite-difference settings.

    jac_scheme, accel_scheme : "forward" or "central"
    jac_rel_step : Jacobian step is ``jac_rel_step * (1 + |theta_mu|)``.
    accel_step : step along the unit (D-scaled) direction used for r''.
    """

    jac_scheme: str = "forward"
    jac_rel_step: float = 1e-6
    accel_scheme: str = "forward"
    accel_step: float = 0.1

    def __post_init__(self):
        for scheme in (self.jac_scheme, self.accel_scheme):
            if scheme not in ("forward", "central"):
                raise ValueError(f"unknown finite-difference scheme {scheme!r}")


DEFAULT_FD = FDConfig()


def _check_finite(values, what):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        idx = int(bad[0])
        raise NumericalFailure(f"non-finite {what} at index {idx}", index=idx)


def _as_theta(p, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (p.n_params,):
        raise ShapeError(f"{p.name}: expected {p.n_params} parameters, got shape {theta.shape}")
    return theta


def eval_residuals(p: ProblemDefinition, theta, counters: EvaluationCounters | None = None) -> np.ndarray:
    """Evaluate ``r(theta)``; counts one residual evaluation."""
    theta = _as_theta(p, theta)
    _check_finite(theta, "parameter")
    r = np.asarray(p.residual_fn(theta), dtype=float)
    if counters is not None:
        counters.residual_evals += 1
    if r.shape != (p.n_residuals,):
        raise ShapeError(f"{p.name}: residual shape {r.shape}, expected ({p.n_residuals},)")
    _check_finite(r, "residual")
    return r


def cost(r) -> float:
    r = np.asarray(r, dtype=float)
    return 0.5 * float(np.dot(r, r))


def eval_jacobian(p: ProblemDefinition, theta, fd: FDConfig = DEFAULT_FD,
                  counters: EvaluationCounters | None = None, r0=None) -> np.ndarray:
    """Jacobian at ``theta``, analytic when available.

    Counts one Jacobian evaluation. In finite-difference mode the residual
    evaluations are counted as well: N for forward differences (plus one if
    ``r0`` is not supplied) and 2N for central differences.
    """
    theta = _as_theta(p, theta)
    if counters is not None:
        counters.jacobian_evals += 1
    if p.jacobian_fn is not None:
        J = np.asarray(p.jacobian_fn(theta), dtype=float)
        if J.shape != (p.n_residuals, p.n_params):
            raise ShapeError(f"{p.name}: Jacobian shape {J.shape}")
        _check_finite(J, "Jacobian entry")
        return J
    return fd_jacobian(p, theta, fd, counters, r0)


def fd_jacobian(p: ProblemDefinition, theta, fd: FDConfig = DEFAULT_FD,
                counters: EvaluationCounters | None = None, r0=None) -> np.ndarray:
    theta = _as_theta(p, theta)
    J = np.empty((p.n_residuals, p.n_params))
    steps = fd.jac_rel_step * (1.0 + np.abs(theta))
    if fd.jac_scheme == "forward" and r0 is None:
        r0 = eval_residuals(p, theta, counters)
    for mu in range(p.n_params):
        h = steps[mu]
        tp = theta.copy()
        tp[mu] += h
        # the representable step may differ from h
        h = tp[mu] - theta[mu]
        rp = eval_residuals(p, tp, counters)
        if fd.jac_scheme == "forward":
            J[:, mu] = (rp - r0) / h
        else:
            tm = theta.copy()
            tm[mu] -= h
            rm = eval_residuals(p, tm, counters)
            J[:, mu] = (rp - rm) / (2.0 * h)
    _check_finite(J, "Jacobian entry")
    return J


def second_directional_derivative(p: ProblemDefinition, theta, v, J=None,
                                  fd: FDConfig = DEFAULT_FD,
                                  counters: EvaluationCounters | None = None,
                                  r0=None, D=None) -> np.ndarray:
    """Second derivative of the residuals along ``v``: ``sum K[m,mu,nu] v_mu v_nu``.

    Without an analytic ``second_dir_fn`` the forward formula

        r'' = (2/h) * ((r(theta + h u) - r(theta)) / h - J u)

    is applied to the unit direction ``u = v / |D v|`` and rescaled by
    ``|D v|**2``. With ``r0`` cached this costs a single residual evaluation.
    The central variant uses ``r(theta + h u) - 2 r(theta) + r(theta - h u)``
    and does not need ``J``.

    A zero direction returns zeros without evaluating anything.
    """
    theta = _as_theta(p, theta)
    v = np.asarray(v, dtype=float)
    if v.shape != (p.n_params,):
        raise ShapeError(f"direction has shape {v.shape}, expected ({p.n_params},)")
    scale = np.ones(p.n_params) if D is None else np.asarray(D, dtype=float)
    vnorm = float(np.linalg.norm(scale * v))
    if vnorm == 0.0:
        return np.zeros(p.n_residuals)
    if counters is not None:
        counters.second_deriv_evals += 1
    if p.second_dir_fn is not None:
        rpp = np.asarray(p.second_dir_fn(theta, v), dtype=float)
        if rpp.shape != (p.n_residuals,):
            raise ShapeError(f"{p.name}: second derivative shape {rpp.shape}")
        _check_finite(rpp, "second derivative")
        return rpp

    u = v / vnorm
    h = fd.accel_step
    if r0 is None:
        r0 = eval_residuals(p, theta, counters)
    rp = eval_residuals(p, theta + h * u, counters)
    if fd.accel_scheme == "forward":
        if J is None:
            raise ValueError("forward second derivative needs the Jacobian")
        rpp_u = (2.0 / h) * ((rp - r0) / h - J @ u)
    else:
        rm = eval_residuals(p, theta - h * u, counters)
        rpp_u = (rp - 2.0 * r0 + rm) / (h * h)
    rpp = rpp_u * vnorm ** 2
    _check_finite(rpp, "second derivative")
    return rpp


def second_derivative_tensor(p: ProblemDefinition, theta, method="auto", h=1e-4,
                             counters: EvaluationCounters | None = None) -> np.ndarray:
    """Full array ``K[m, mu, nu]`` of residual second derivatives.

    ``method="analytic"`` polarizes ``second_dir_fn`` (exact for analytic
    input), ``"fd"`` uses central second differences of the residuals with
    step ``h * (1 + |theta_mu|)``; ``"auto"`` picks analytic when possible.
    Costs O(N^2) evaluations, so it is meant for diagnostics and oracles.
    """
    theta = _as_theta(p, theta)
    n, m = p.n_params, p.n_residuals
    if method == "auto":
        method = "analytic" if p.second_dir_fn is not None else "fd"
    K = np.empty((m, n, n))
    eye = np.eye(n)
    if method == "analytic":
        if p.second_dir_fn is None:
            raise ValueError(f"{p.name} has no analytic second derivative")
        diag = [np.asarray(p.second_dir_fn(theta, eye[i]), dtype=float) for i in range(n)]
        for i in range(n):
            K[:, i, i] = diag[i]
            for j in range(i + 1, n):
                both = np.asarray(p.second_dir_fn(theta, eye[i] + eye[j]), dtype=float)
                K[:, i, j] = K[:, j, i] = 0.5 * (both - diag[i] - diag[j])
        if counters is not None:
            counters.second_deriv_evals += n * (n + 1) // 2
    elif method == "fd":
        steps = h * (1.0 + np.abs(theta))
        r0 = eval_residuals(p, theta, counters)

        def r_at(offset):
            return eval_residuals(p, theta + offset, counters)

        for i in range(n):
            ei = steps[i] * eye[i]
            K[:, i, i] = (r_at(ei) - 2.0 * r0 + r_at(-ei)) / steps[i] ** 2
            for j in range(i + 1, n):
                ej = steps[j] * eye[j]
                mixed = (r_at(ei + ej) - r_at(ei - ej) - r_at(ej - ei) + r_at(-ei - ej))
                K[:, i, j] = K[:, j, i] = mixed / (4.0 * steps[i] * steps[j])
    else:
        raise ValueError(f"unknown method {method!r}")
    _check_finite(K, "second derivative")
    return K
