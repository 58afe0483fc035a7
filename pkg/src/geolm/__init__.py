"""Levenberg-Marquardt with geodesic acceleration for nonlinear least squares."""
from .errors import (DegenerateModelReduction, GeoLMError, NumericalFailure, OracleNoConverge,
                     ParseError, RankDeficient, ShapeError, SubproblemWarning)
from .problem import (EvaluationCounters, FDConfig, ProblemDefinition, cost, eval_jacobian,
                      eval_residuals, second_derivative_tensor, second_directional_derivative)
from .linalg import (RegularizedFactorization, projection_normal, solve_regularized,
                     solve_subproblem)
from .step import StepProposal, acceleration_step, propose_step, velocity_step
from .trustregion import (FitResult, IterationRecord, Outcome, Policy, Scaling, Status,
                          TrustRegionConfig, TrustRegionState, iterate, model_reduction,
                          reduction_ratio, run)
from .suite import SuiteProblem, builtin_problems, fit_problem_from_csv, get_problem

__version__ = "0.1.0"
