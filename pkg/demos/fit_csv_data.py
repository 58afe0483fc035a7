"""
Fitting a model to data from a file
===================================

Write a small dataset to CSV, bind it to the single-exponential model
and fit it, exactly as ``geolm fit exp1 --data pts.csv`` would.
"""

import tempfile
from pathlib import Path

import numpy as np

from geolm import TrustRegionConfig, run
from geolm.io import log_to_csv
from geolm.suite import Dataset, fit_problem_from_csv, write_dataset_csv

rng = np.random.default_rng(0)
t = np.linspace(0.0, 5.0, 25)
y = np.exp(-0.8 * t) + rng.normal(scale=0.01, size=t.size)

###############################################################################
# The file format is a ``t,y`` header followed by one point per line.

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "pts.csv"
    write_dataset_csv(Dataset(t, y), path)
    print(path.read_text().splitlines()[:3])

    sp = fit_problem_from_csv("exp1", path, start_points=[[0.1]])
    result = run(sp.problem, sp.start_points[0], TrustRegionConfig())

###############################################################################
# With a little noise the rate comes back close to 0.8 and the cost is of
# order the noise variance times the number of points.

print(f"{result.status.value}: rate {result.theta[0]:.6f}, cost {result.cost:.4g}")
print(log_to_csv(result.log))
