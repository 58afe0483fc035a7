"""Diagnostics for the small-curvature approximation and the acceleration bound.

These routines are meant for small problems and for analysis along a
trajectory; they materialize O(M^2) and O(M N^2) arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .linalg import projection_normal
from .problem import eval_jacobian, eval_residuals, second_derivative_tensor, second_directional_derivative


def gn_hessian(J):
    """Gauss-Newton approximation ``J^T J`` to the cost Hessian."""
    J = np.asarray(J, dtype=float)
    return J.T @ J


def spectral_norm(A, tol=1e-6, max_iter=500, seed=0):
    """Largest singular value by power iteration on ``A^T A``."""
    A = np.asarray(A, dtype=float)
    if not np.any(A):
        return 0.0
    x = np.random.default_rng(seed).standard_normal(A.shape[1])
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(max_iter):
        y = A.T @ (A @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        new = np.sqrt(ny)
        if abs(new - sigma) <= tol * new:
            return float(new)
        sigma = new
    return float(sigma)


@dataclass
class CurvatureReport:
    gn_norm: float
    neglected_norm: float
    projected_neglected_norm: float
    projected_neglected_norm_at_lambda: float
    ratio: float
    neglected: np.ndarray
    projected: np.ndarray


def curvature_report(problem, theta, lam=0.0, D=None, method="auto") -> CurvatureReport:
    """Compare the Hessian term dropped by Gauss-Newton with its projection.

    ``neglected`` is ``sum_m r_m K_m`` and ``projected`` is
    ``sum_mn r_m P_mn K_n`` with the normal-plane projector ``P`` at
    ``lam = 0``. Both agree at a stationary point, where the residual is
    orthogonal to the tangent plane. The norm with the projector built at
    ``lam`` is reported as well.
    """
    theta = np.asarray(theta, dtype=float)
    r = eval_residuals(problem, theta)
    J = eval_jacobian(problem, theta)
    K = second_derivative_tensor(problem, theta, method=method)
    neglected = np.einsum("m,mij->ij", r, K)
    P0 = projection_normal(J, 0.0, D)
    projected = np.einsum("m,mij->ij", P0 @ r, K)
    if lam > 0:
        P = projection_normal(J, lam, D)
        at_lam = spectral_norm(np.einsum("m,mij->ij", P @ r, K))
    else:
        at_lam = spectral_norm(projected)
    gn = spectral_norm(gn_hessian(J))
    neg = spectral_norm(neglected)
    return CurvatureReport(gn, neg, spectral_norm(projected), at_lam,
                           neg / gn if gn > 0 else float("inf"), neglected, projected)


def estimate_kappa(problem, theta, n_directions=64, seed=0, extra_directions=()):
    """Max of ``|r''(u)|`` over random unit directions (plus any extras).

    This is a local stand-in for the global second-derivative bound; it can
    only under-report, which makes hypotheses harder to satisfy.
    """
    rng = np.random.default_rng(seed)
    n = problem.n_params
    theta = np.asarray(theta, dtype=float)
    dirs = list(rng.standard_normal((n_directions, n)))
    dirs.extend(np.asarray(d, dtype=float) for d in extra_directions)
    r = eval_residuals(problem, theta)
    J = eval_jacobian(problem, theta)
    kappa = 0.0
    for u in dirs:
        nu = np.linalg.norm(u)
        if nu == 0:
            continue
        rpp = second_directional_derivative(problem, theta, u / nu, J, r0=r)
        kappa = max(kappa, float(np.linalg.norm(rpp)))
    return kappa


class Lemma1Check(NamedTuple):
    hypotheses_hold: bool
    conclusion_holds: bool


def lemma1_check(J, r, kappa, alpha, zeta, delta, dtheta1, dtheta2, beta=None) -> Lemma1Check:
    """Evaluate the small-radius condition that guarantees a bounded correction.

    Hypotheses: ``zeta*delta <= |g| / (sqrt(beta*kappa*|r|/alpha) + beta)``
    and ``|dtheta1| <= zeta*delta``, with ``g = J^T r`` and ``beta`` the
    spectral norm of ``J^T J`` unless given. Conclusion:
    ``|dtheta2| / |dtheta1| < alpha / 2``. Unscaled norms (D = I).
    """
    J = np.asarray(J, dtype=float)
    r = np.asarray(r, dtype=float)
    n1 = float(np.linalg.norm(dtheta1))
    n2 = float(np.linalg.norm(dtheta2))
    if n1 == 0.0:
        return Lemma1Check(False, True)
    if beta is None:
        beta = float(np.linalg.norm(J.T @ J, 2))
    g = float(np.linalg.norm(J.T @ r))
    bound = g / (np.sqrt(beta * kappa * np.linalg.norm(r) / alpha) + beta)
    hyp = zeta * delta <= bound and n1 <= zeta * delta
    return Lemma1Check(bool(hyp), n2 / n1 < alpha / 2)


def step_bounds(J, r, kappa, lam, dtheta1, dtheta2, beta=None):
    """Return ``(|dtheta1| <= sqrt(beta)|r|/lam, |dtheta2| <= sqrt(beta) kappa |dtheta1|^2 / (2 lam))``."""
    J = np.asarray(J, dtype=float)
    if beta is None:
        beta = float(np.linalg.norm(J.T @ J, 2))
    n1 = float(np.linalg.norm(dtheta1))
    n2 = float(np.linalg.norm(dtheta2))
    slack = 1.0 + 1e-12
    b1 = n1 <= slack * np.sqrt(beta) * np.linalg.norm(r) / lam
    b2 = n2 <= slack * np.sqrt(beta) * kappa * n1 ** 2 / (2.0 * lam)
    return bool(b1), bool(b2)
