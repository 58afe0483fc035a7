"""Velocity and geodesic-acceleration step components."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure
from .linalg import RegularizedFactorization, solve_subproblem
from .problem import second_directional_derivative

DEFAULT_ALPHA = 0.75


@dataclass
class StepProposal:
    velocity: np.ndarray
    acceleration: np.ndarray
    lam: float
    r_second: np.ndarray
    alpha_ratio: float
    accepted_by_alpha: bool
    stationary: bool = False
    degraded: bool = False
    subproblem_converged: bool = True

    @property
    def step(self) -> np.ndarray:
        return self.velocity + self.acceleration


def velocity_step(J, r, lam, D=None, factor=None):
    """Levenberg-Marquardt step ``-(J^T J + lam D^T D)^{-1} J^T r``."""
    if factor is None:
        factor = RegularizedFactorization(J, lam, D)
    return -factor.solve_lsq(r)


def acceleration_step(J, lam, D, r_second, factor=None):
    """Second-order correction ``-1/2 (J^T J + lam D^T D)^{-1} J^T r''``.

    Pass ``factor`` to reuse the factorization from the velocity solve.
    """
    if factor is None:
        factor = RegularizedFactorization(J, lam, D)
    return -0.5 * factor.solve_lsq(r_second)


def alpha_ratio(velocity, acceleration, D=None):
    """``2 |D a| / |D v|`` in the scaled norm; 0 for a zero velocity."""
    D = np.ones_like(velocity) if D is None else D
    vnorm = np.linalg.norm(D * velocity)
    if vnorm == 0.0:
        return 0.0
    return 2.0 * float(np.linalg.norm(D * acceleration)) / float(vnorm)


def propose_step(problem, state, config, counters=None) -> StepProposal:
    """Build the accelerated step for the current iterate.

    ``state`` must expose ``theta``, ``r``, ``J``, ``D``, ``delta`` and
    ``lam``; ``config`` supplies ``policy``, ``alpha``, ``use_acceleration``
    and ``fd``. The delta-based policy solves the trust-region subproblem
    for ``lam``; the direct-lambda policy uses ``state.lam`` as given.
    """
    J, r, D = state.J, state.r, state.D
    n, m = J.shape[1], J.shape[0]
    converged = True
    if config.policy == "delta":
        lam, v, factor, converged = solve_subproblem(J, r, D, state.delta, state.lam)
    else:
        lam = state.lam
        factor = RegularizedFactorization(J, lam, D)
        v = velocity_step(J, r, lam, D, factor)

    zeros_n, zeros_m = np.zeros(n), np.zeros(m)
    if not np.any(v):
        return StepProposal(v, zeros_n, lam, zeros_m, 0.0, True, stationary=True,
                            subproblem_converged=converged)
    if not config.use_acceleration:
        return StepProposal(v, zeros_n, lam, zeros_m, 0.0, True,
                            subproblem_converged=converged)

    degraded = False
    try:
        rpp = second_directional_derivative(problem, state.theta, v, J, config.fd,
                                            counters, r0=r, D=D)
        a = acceleration_step(J, lam, D, rpp, factor)
        if not np.all(np.isfinite(a)):
            raise NumericalFailure("non-finite acceleration")
    except NumericalFailure:
        rpp, a, degraded = zeros_m, zeros_n, True
    ratio = alpha_ratio(v, a, D)
    return StepProposal(v, a, lam, rpp, ratio, ratio <= config.alpha,
                        degraded=degraded, subproblem_converged=converged)
