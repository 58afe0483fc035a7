"""Trust-region Levenberg-Marquardt driver with geodesic acceleration.

The delta-based policy follows the classic trust-region update: a step is
first screened by the acceleration bound ``2 |a| / |v| <= alpha``; screened
steps are judged by the reduction ratio against the first-order model

    m(dt) = 0.5 * |r + J dt|^2

and the radius is quartered, doubled (capped at ``delta_hat``) or kept.
The direct-lambda policy adjusts the damping by fixed factors instead.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import DegenerateModelReduction, NumericalFailure
from .linalg import SUBPROBLEM_RTOL, identity_scaling, marquardt_scaling
from .problem import (DEFAULT_FD, EvaluationCounters, FDConfig, ProblemDefinition,
                      cost, eval_jacobian, eval_residuals)
from .step import DEFAULT_ALPHA, StepProposal, propose_step

MIN_MODEL_REDUCTION = 1e-300


class Policy(str, enum.Enum):
    DELTA = "delta"
    LAMBDA = "lambda"


class Scaling(str, enum.Enum):
    IDENTITY = "identity"
    MARQUARDT = "marquardt"


class Outcome(str, enum.Enum):
    ACCEPTED = "AcceptedStep"
    RHO_REJECTED = "RhoRejected"
    ALPHA_REJECTED = "AlphaRejected"


class Status(str, enum.Enum):
    GRADIENT = "GradientConverged"
    COST = "CostConverged"
    STEP = "StepConverged"
    BUDGET = "BudgetExhausted"
    FAILURE = "NumericalFailure"

    @property
    def converged(self):
        return self in (Status.GRADIENT, Status.COST, Status.STEP)


@dataclass(frozen=True)
class TrustRegionConfig:
    delta0: float = 1.0
    delta_hat: float = 1e3
    alpha: float = DEFAULT_ALPHA
    policy: Policy = Policy.DELTA
    lambda0: float = 1e-3
    lambda_up: float = 2.0
    lambda_down: float = 3.0
    gtol: float = 1e-8
    ftol: float = 1e-10
    xtol: float = 1e-10
    max_iterations: int = 1000
    max_residual_evals: int = 10000
    max_jacobian_evals: int = 1000
    use_acceleration: bool = True
    scaling: Scaling = Scaling.IDENTITY
    sigma: float = SUBPROBLEM_RTOL
    fd: FDConfig = DEFAULT_FD

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        object.__setattr__(self, "scaling", Scaling(self.scaling))
        if not 0 < self.delta0 < self.delta_hat:
            raise ValueError("need 0 < delta0 < delta_hat")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if self.lambda_up <= 1 or self.lambda_down <= 1:
            raise ValueError("lambda factors must exceed 1")
        for name in ("max_iterations", "max_residual_evals", "max_jacobian_evals"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class TrustRegionState:
    theta: np.ndarray
    r: np.ndarray
    J: np.ndarray
    D: np.ndarray
    delta: float
    lam: float
    counters: EvaluationCounters = field(default_factory=EvaluationCounters)
    iteration: int = 0

    @property
    def cost(self) -> float:
        return cost(self.r)

    @property
    def gradient(self) -> np.ndarray:
        return self.J.T @ self.r


@dataclass
class IterationRecord:
    """One optimizer iteration.

    ``cost``, ``grad_norm`` and ``theta`` describe the iterate the step was
    proposed from; ``delta`` and ``lam`` are the values used for the
    proposal (``delta`` is None under the direct-lambda policy). Step norms
    are in the D-scaled metric. Counters are cumulative after the iteration.
    """

    iter: int
    theta: np.ndarray
    cost: float
    grad_norm: float
    delta: Optional[float]
    lam: float
    rho: Optional[float]
    step1_norm: float
    step2_norm: float
    alpha_ratio: float
    outcome: Outcome
    r_evals: int
    j_evals: int
    rpp_evals: int


@dataclass
class FitResult:
    theta: np.ndarray
    cost: float
    status: Status
    counters: EvaluationCounters
    log: List[IterationRecord]
    grad_norm: float = float("nan")
    message: str = ""

    @property
    def iterations(self):
        return len(self.log)


def model_reduction(J, r, dtheta) -> float:
    """``m(0) - m(dtheta) = -dtheta^T J^T r - 0.5 |J dtheta|^2``."""
    Jd = np.asarray(J) @ np.asarray(dtheta)
    return float(-(Jd @ r) - 0.5 * (Jd @ Jd))


def reduction_ratio(problem, theta, dtheta, J, r, counters=None):
    """Actual over predicted decrease; returns ``(rho, r_trial)``.

    ``r_trial`` is the residual at ``theta + dtheta`` so an accepted step
    needs no second evaluation. Raises :class:`DegenerateModelReduction`
    when the predicted decrease is not positive.
    """
    pred = model_reduction(J, r, dtheta)
    if not pred > MIN_MODEL_REDUCTION:
        raise DegenerateModelReduction(f"predicted reduction {pred:g}")
    r_trial = eval_residuals(problem, np.asarray(theta) + dtheta, counters)
    return (cost(r) - cost(r_trial)) / pred, r_trial


def _scaling(config, J, previous=None):
    if config.scaling is Scaling.MARQUARDT:
        return marquardt_scaling(J, previous)
    return identity_scaling(J.shape[1])


def initial_state(problem: ProblemDefinition, theta0, config: TrustRegionConfig,
                  counters: EvaluationCounters | None = None) -> TrustRegionState:
    counters = EvaluationCounters() if counters is None else counters
    theta = np.array(theta0, dtype=float)
    r = eval_residuals(problem, theta, counters)
    J = eval_jacobian(problem, theta, config.fd, counters, r0=r)
    lam = config.lambda0 if config.policy is Policy.LAMBDA else 0.0
    return TrustRegionState(theta, r, J, _scaling(config, J), config.delta0, lam, counters)


def next_delta(delta, rho, step1_norm, config):
    """Radius update after a screened step (no alpha rejection)."""
    if rho < 0.25:
        return 0.25 * delta
    if rho > 0.75 and step1_norm >= (1.0 - config.sigma) * delta:
        return min(2.0 * delta, config.delta_hat)
    return delta


def iterate(problem, state: TrustRegionState, config: TrustRegionConfig):
    """Run one iteration; returns ``(new_state, record)``.

    Raises :class:`NumericalFailure` if the Jacobian at an accepted point
    cannot be evaluated, and :class:`DegenerateModelReduction` when a plain
    LM step predicts no decrease (the iterate is stationary to precision).
    """
    counters = state.counters
    prop: StepProposal = propose_step(problem, state, config, counters)
    D = state.D
    n1 = float(np.linalg.norm(D * prop.velocity))
    n2 = float(np.linalg.norm(D * prop.acceleration))
    if prop.stationary:
        raise DegenerateModelReduction("zero velocity step")

    delta_based = config.policy is Policy.DELTA
    rho = None
    r_trial = None
    if not prop.accepted_by_alpha:
        outcome = Outcome.ALPHA_REJECTED
    else:
        step = prop.step
        try:
            rho, r_trial = reduction_ratio(problem, state.theta, step, state.J, state.r, counters)
        except DegenerateModelReduction:
            if not np.any(prop.acceleration):
                raise
            # the correction spoiled the model decrease; treat as a failed step
            rho = None
        except NumericalFailure:
            rho = -np.inf
        outcome = Outcome.ACCEPTED if rho is not None and rho > 0 else Outcome.RHO_REJECTED

    if delta_based:
        if outcome is Outcome.ALPHA_REJECTED or rho is None:
            new_delta = 0.25 * state.delta
        else:
            new_delta = next_delta(state.delta, rho, n1, config)
        new_lam = prop.lam
    else:
        new_delta = state.delta
        if outcome is Outcome.ACCEPTED:
            new_lam = state.lam / config.lambda_down
        else:
            new_lam = state.lam * config.lambda_up

    record = IterationRecord(
        iter=state.iteration, theta=state.theta.copy(), cost=state.cost,
        grad_norm=float(np.linalg.norm(state.gradient)),
        delta=state.delta if delta_based else None, lam=prop.lam,
        rho=None if rho is None else float(rho), step1_norm=n1, step2_norm=n2,
        alpha_ratio=prop.alpha_ratio, outcome=outcome,
        r_evals=0, j_evals=0, rpp_evals=0,
    )

    new = replace(state, delta=new_delta, lam=new_lam, iteration=state.iteration + 1)
    if outcome is Outcome.ACCEPTED:
        theta = state.theta + prop.step
        J = eval_jacobian(problem, theta, config.fd, counters, r0=r_trial)
        new = replace(new, theta=theta, r=r_trial, J=J, D=_scaling(config, J, state.D))
    record.r_evals = counters.residual_evals
    record.j_evals = counters.jacobian_evals
    record.rpp_evals = counters.second_deriv_evals
    return new, record


def _budget_exhausted(state, config):
    c = state.counters
    return (state.iteration >= config.max_iterations
            or c.residual_evals >= config.max_residual_evals
            or c.jacobian_evals >= config.max_jacobian_evals)


def run(problem: ProblemDefinition, theta0, config: TrustRegionConfig | None = None) -> FitResult:
    """Minimize ``0.5 |r(theta)|^2`` from ``theta0``.

    Never raises on numerical trouble; the returned status says what
    happened. Stops on the first of: gradient norm <= gtol, relative cost
    decrease (actual and predicted) <= ftol, scaled step <= xtol relative
    to the scaled parameters, or an exhausted budget.
    """
    config = TrustRegionConfig() if config is None else config
    counters = EvaluationCounters()
    log: List[IterationRecord] = []
    try:
        state = initial_state(problem, theta0, config, counters)
    except NumericalFailure as exc:
        theta = np.array(theta0, dtype=float)
        return FitResult(theta, float("nan"), Status.FAILURE, counters, log, message=str(exc))

    status = None
    message = ""
    if np.linalg.norm(state.gradient) <= config.gtol:
        status = Status.GRADIENT
    while status is None:
        if _budget_exhausted(state, config):
            status = Status.BUDGET
            break
        try:
            new, rec = iterate(problem, state, config)
        except NumericalFailure as exc:
            status, message = Status.FAILURE, str(exc)
            break
        except DegenerateModelReduction as exc:
            status, message = Status.STEP, str(exc)
            break
        log.append(rec)
        scale = float(np.linalg.norm(state.D * state.theta))
        if rec.outcome is Outcome.ACCEPTED:
            step = new.theta - state.theta
            old_cost, new_cost = state.cost, new.cost
            pred = model_reduction(state.J, state.r, step)
            if np.linalg.norm(new.gradient) <= config.gtol:
                status = Status.GRADIENT
            elif old_cost - new_cost <= config.ftol * old_cost and pred <= config.ftol * old_cost:
                status = Status.COST
            elif np.linalg.norm(state.D * step) <= config.xtol * (scale + config.xtol):
                status = Status.STEP
        elif rec.step1_norm <= config.xtol * (scale + config.xtol):
            status = Status.STEP
        state = new

    return FitResult(state.theta.copy(), state.cost, status, counters, log,
                     grad_norm=float(np.linalg.norm(state.gradient)), message=message)
