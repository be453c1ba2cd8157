"""Estimate the convergence rate of the Bregman error for one exponent and noise regime.

Calibrates the regularisation constant on held-out draws, runs the Monte
Carlo sweep over N, fits c N^beta and writes the raw table, the summary
table and the log-log plot.  Takes a minute or so at the default size.

    python demos/rate_sweep.py [p] [fixed|decreasing] [output_dir]
"""

import sys
from fractions import Fraction
from dataclasses import replace
from pathlib import Path

from bregrates.experiments import (
    DESK_N_VALUES,
    calibrate_c_alpha,
    make_plan,
    run_sweep,
    write_sweep_outputs,
)

p = float(Fraction(sys.argv[1])) if len(sys.argv) > 1 else 1.5
regime = sys.argv[2] if len(sys.argv) > 2 else "decreasing"
out = Path(sys.argv[3] if len(sys.argv) > 3 else "demo-out/rate_sweep")
out.mkdir(parents=True, exist_ok=True)

plan = make_plan(p, regime, n_values=DESK_N_VALUES, realizations=10, seed=0)
cal = calibrate_c_alpha(plan)
print("calibration trials (c_alpha, beta): "
      + ", ".join(f"({c:.3g}, {b:.3f})" for c, b in cal.trials))
plan = replace(plan, schedule=replace(plan.schedule, c_alpha=cal.c_alpha))

result = run_sweep(plan)
for n, m, s in zip(plan.n_values, result.fit.per_N_means, result.fit.per_N_stddevs):
    print(f"N={n:3d}  mean Bregman {m:9.4g}  sd {s:8.3g}")
print(f"fit: {result.fit.c:.4g} * N^{result.fit.beta:.3f}  (r^2 = {result.fit.r_squared:.3f})")
for kind, path in write_sweep_outputs(out, result).items():
    print(f"{kind}: {path}")
