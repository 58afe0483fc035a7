"""
How much curvature does Gauss-Newton throw away?
================================================

Compare the Hessian term dropped by the Gauss-Newton approximation with
the part that survives projection onto the normal plane of the model
manifold, and check the small-radius bound on the correction.
"""

import numpy as np

from geolm import get_problem
from geolm.diagnostics import curvature_report, estimate_kappa, lemma1_check
from geolm.problem import eval_jacobian, eval_residuals, second_directional_derivative
from geolm.step import acceleration_step, velocity_step

###############################################################################
# A linear fit to incompatible data: large residuals, zero curvature.

s = get_problem("linear_incompatible")
rep = curvature_report(s.problem, s.known_minimum[0])
print(f"incompatible line: cost {s.known_minimum[1]:.3g}, neglected {rep.neglected_norm}")

###############################################################################
# Along a path into the exponential canyon the dropped term shrinks, and its
# projection is never larger.

s = get_problem("exp2")
star = np.array(s.known_minimum[0])
for shift in (1.0, 0.3, 0.1, 0.01):
    theta = star + shift * np.array([0.6, -0.8])
    rep = curvature_report(s.problem, theta)
    print(f"offset {shift:5.2f}: |JtJ| {rep.gn_norm:9.3g}  neglected {rep.neglected_norm:9.3g}  "
          f"projected {rep.projected_neglected_norm:9.3g}")

###############################################################################
# Small radii keep the correction small relative to the velocity.

theta = np.array([0.0, 0.1])
r, J = eval_residuals(s.problem, theta), eval_jacobian(s.problem, theta)
for lam in (1e-2, 1e0, 1e2, 1e4):
    v = velocity_step(J, r, lam)
    a = acceleration_step(J, lam, None, second_directional_derivative(s.problem, theta, v, J))
    kappa = estimate_kappa(s.problem, theta, extra_directions=[v])
    check = lemma1_check(J, r, kappa, 0.75, 1.5, np.linalg.norm(v) / 1.5, v, a)
    print(f"lam {lam:7.0e}: |a|/|v| {np.linalg.norm(a) / np.linalg.norm(v):.3e}  {check}")
