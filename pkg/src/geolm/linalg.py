"""Regularized solves for the Levenberg-Marquardt normal equations.

Everything here works with a diagonal scaling ``D`` stored as a 1-d array.
The system ``(J^T J + lam D^T D) x = b`` is never formed explicitly; a
pivoted QR factorization of the stacked matrix ``[J; sqrt(lam) D]`` is used
instead, which avoids squaring the condition number of ``J``.
"""
from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import NumericalFailure, RankDeficient, SubproblemWarning

SUBPROBLEM_RTOL = 0.1
SUBPROBLEM_MAXITER = 10
SCALING_FLOOR = 1e-8


def identity_scaling(n):
    return np.ones(n)


def marquardt_scaling(J, previous=None, floor=SCALING_FLOOR):
    """Column norms of ``J``, kept monotone over the run and floored."""
    D = np.sqrt(np.einsum("ij,ij->j", J, J))
    if previous is not None:
        D = np.maximum(D, previous)
    return np.maximum(D, floor)


class RegularizedFactorization:
    """Factorization of ``J^T J + lam * diag(D)**2`` for repeated solves.

    Parameters
    ----------
    J : (M, N) array
    lam : float
        Damping, must be >= 0. At ``lam == 0`` a rank-deficient ``J`` raises
        :class:`RankDeficient`.
    D : (N,) array, optional
        Diagonal scaling, identity by default.
    """

    def __init__(self, J, lam=0.0, D=None):
        J = np.asarray(J, dtype=float)
        if lam < 0 or not np.isfinite(lam):
            raise ValueError(f"damping must be finite and >= 0, got {lam}")
        m, n = J.shape
        self.J = J
        self.lam = float(lam)
        self.D = np.ones(n) if D is None else np.asarray(D, dtype=float)
        if not np.all(np.isfinite(J)):
            raise NumericalFailure("non-finite Jacobian")
        if lam > 0:
            A = np.vstack([J, np.sqrt(lam) * np.diag(self.D)])
        else:
            if m < n:
                raise RankDeficient(f"{m}x{n} Jacobian cannot have full column rank")
            A = J
        Q, R, piv = qr(A, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        tol = max(A.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
        if diag.size == 0 or diag[0] == 0.0 or diag[-1] <= tol:
            if lam == 0:
                raise RankDeficient("Jacobian is rank deficient")
            raise NumericalFailure("regularized system is singular")
        self._Q1 = Q[:m]
        self._R = R
        self._piv = piv

    @property
    def n(self):
        return self._R.shape[0]

    def _unpermute(self, y):
        x = np.empty_like(y)
        x[self._piv] = y
        return x

    def solve(self, rhs):
        """Solve ``(J^T J + lam D^2) x = rhs``."""
        rhs = np.asarray(rhs, dtype=float)
        z = solve_triangular(self._R, rhs[self._piv], trans="T")
        return self._unpermute(solve_triangular(self._R, z))

    def solve_lsq(self, b):
        """Return ``(J^T J + lam D^2)^{-1} J^T b`` through the orthogonal factor."""
        b = np.asarray(b, dtype=float)
        return self._unpermute(solve_triangular(self._R, self._Q1.T @ b))

    def inv_quadratic(self, w):
        """``w^T (J^T J + lam D^2)^{-1} w``."""
        z = solve_triangular(self._R, np.asarray(w, dtype=float)[self._piv], trans="T")
        return float(z @ z)

    def tangent_basis(self):
        """``W`` with ``W W^T = J (J^T J + lam D^2)^{-1} J^T``."""
        return solve_triangular(self._R, self.J[:, self._piv].T, trans="T").T


def solve_regularized(J, rhs, lam, D=None):
    """Solve ``(J^T J + lam D^T D) x = rhs`` via the augmented QR system."""
    return RegularizedFactorization(J, lam, D).solve(rhs)


def projection_normal(J, lam=0.0, D=None):
    """``P^N = I - J (J^T J + lam D^T D)^{-1} J^T`` as a dense M x M matrix."""
    W = RegularizedFactorization(J, lam, D).tangent_basis()
    return np.eye(W.shape[0]) - W @ W.T


class SubproblemSolution(NamedTuple):
    lam: float
    step: np.ndarray
    factor: RegularizedFactorization
    converged: bool


def solve_subproblem(J, r, D, delta, lam_hint=0.0, rtol=SUBPROBLEM_RTOL,
                     max_iter=SUBPROBLEM_MAXITER) -> SubproblemSolution:
    """Find ``lam`` so that the LM step has ``|D step|`` close to ``delta``.

    Returns the Gauss-Newton step with ``lam = 0`` when it already lies in
    the trust region. Otherwise Moré's safeguarded Newton iteration on
    ``1/|D p(lam)| - 1/delta`` is run until ``|D p| / delta`` lies within
    ``1 +- rtol``. If the iteration cap is hit, the midpoint of the final
    bracket is used and a :class:`SubproblemWarning` is issued.
    """
    if not delta > 0:
        raise ValueError(f"trust radius must be positive, got {delta}")
    J = np.asarray(J, dtype=float)
    r = np.asarray(r, dtype=float)
    n = J.shape[1]
    D = np.ones(n) if D is None else np.asarray(D, dtype=float)
    g = J.T @ r

    lam_floor = 0.0
    lower = 0.0
    try:
        f0 = RegularizedFactorization(J, 0.0, D)
    except RankDeficient:
        f0 = None
        jtj_max = float(np.max(np.einsum("ij,ij->j", J, J)))
        lam_floor = 1e-14 * jtj_max if jtj_max > 0 else np.finfo(float).tiny
    if f0 is not None:
        p = -f0.solve_lsq(r)
        dp = np.linalg.norm(D * p)
        if dp <= delta:
            return SubproblemSolution(0.0, p, f0, True)
        # Newton step from lam = 0 underestimates the root (convexity)
        phi = dp - delta
        lower = phi / delta * dp ** 2 / f0.inv_quadratic(D * D * p)
    else:
        f = RegularizedFactorization(J, lam_floor, D)
        p = -f.solve_lsq(r)
        if np.linalg.norm(D * p) <= delta:
            return SubproblemSolution(lam_floor, p, f, True)
        lower = lam_floor

    upper = np.linalg.norm(g / D) / delta
    lam = lam_hint
    if not lower < lam < upper:
        lam = max(1e-3 * upper, np.sqrt(lower * upper))

    for _ in range(max_iter):
        if not lower <= lam <= upper:
            lam = max(1e-3 * upper, np.sqrt(lower * upper))
        lam = max(lam, lam_floor)
        f = RegularizedFactorization(J, lam, D)
        p = -f.solve_lsq(r)
        dp = np.linalg.norm(D * p)
        phi = dp - delta
        if abs(phi) <= rtol * delta:
            return SubproblemSolution(lam, p, f, True)
        if phi > 0:
            lower = max(lower, lam)
        else:
            upper = min(upper, lam)
        correction = phi / delta * dp ** 2 / f.inv_quadratic(D * D * p)
        lam = max(lower, lam + correction)

    lam = max(0.5 * (lower + upper), lam_floor)
    warnings.warn(f"subproblem did not converge in {max_iter} iterations",
                  SubproblemWarning, stacklevel=2)
    f = RegularizedFactorization(J, lam, D)
    return SubproblemSolution(lam, -f.solve_lsq(r), f, False)
