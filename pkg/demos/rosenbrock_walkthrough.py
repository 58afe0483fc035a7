"""
Walking down the Rosenbrock valley
==================================

Fit the Rosenbrock function written as two residuals, with and without
the second-order correction, and print what each iteration did.
"""

import numpy as np

from geolm import TrustRegionConfig, get_problem, run

suite_problem = get_problem("rosenbrock")
problem = suite_problem.problem
theta0 = suite_problem.start_points[0]

###############################################################################
# Plain Levenberg-Marquardt first, then the accelerated variant.

for accel in (False, True):
    result = run(problem, theta0, TrustRegionConfig(use_acceleration=accel))
    label = "LM+GA" if accel else "LM"
    print(f"{label}: {result.status.value} at {np.round(result.theta, 10)} "
          f"after {result.iterations} iterations, {result.counters.as_dict()}")

###############################################################################
# Every record says which branch of the radius update fired. A rejected
# correction (``AlphaRejected``) quarters the radius without moving.

result = run(problem, theta0, TrustRegionConfig())
print(f"{'it':>3} {'cost':>12} {'delta':>9} {'rho':>8} {'|v|':>9} {'ratio':>7}  outcome")
for rec in result.log:
    rho = "" if rec.rho is None else f"{rec.rho:8.3f}"
    print(f"{rec.iter:3d} {rec.cost:12.4e} {rec.delta:9.3g} {rho:>8} "
          f"{rec.step1_norm:9.3g} {rec.alpha_ratio:7.3f}  {rec.outcome.value}")
