"""One noisy reconstruction per angle count, showing how the error shrinks with N.

Draws N random angles out of 180, adds Gaussian noise whose level falls like
1/N, solves the penalised least-squares problem and reports the Bregman
distance to the ground truth together with solver statistics.

    python demos/single_reconstruction.py [p]
"""

import sys
from fractions import Fraction

import numpy as np

from bregrates.experiments import make_plan, run_realization

p = float(Fraction(sys.argv[1])) if len(sys.argv) > 1 else 1.5
n_values = (18, 32, 50, 81)
plan = make_plan(p, "decreasing", n_values=n_values, realizations=1, seed=1)
print(plan.describe())

print(f"{'N':>4} {'delta':>10} {'alpha':>10} {'bregman':>10} {'iters':>6} {'conv':>5} {'bound':>5}")
for n in n_values:
    r = run_realization(plan, n, 0)
    print(f"{n:4d} {r.delta:10.3e} {r.alpha:10.3e} {r.bregman:10.4g} {r.iterations:6d} "
          f"{str(r.converged):>5} {'ok' if r.apriori_ok else 'FAIL':>5}")

ratio = np.log(run_realization(plan, 81, 0).bregman / run_realization(plan, 18, 0).bregman)
print(f"single-draw slope between N=18 and N=81: {ratio / np.log(81 / 18):.2f}")
