"""
Three toy problems, one per weighting aspect
============================================

Both members are closed-form: f1 = sin(x) and f2 = sin(x) + 10.
Neither matches the target alone; the ensemble has to find the right mix.
"""

import numpy as np

from csge.synthetic import run_experiment

# global: the target sin(x) + 4 sits 4 away from f1 and 6 away from f2,
# so a fixed 0.6/0.4 blend is exact
run = run_experiment("global")
print("global  eta:", np.round(run.model.eta.as_array(), 3))
print("        blend:", np.round(run.w_final.mean(axis=(0, 1)), 4), "rmse:", f"{run.rmse:.2e}")

# local: f2 is right on [10, 15], f1 everywhere else
run = run_experiment("local")
x = run.x_test
for q in (5.0, 12.0, 17.0):
    i = np.argmin(np.abs(x - q))
    print(f"local   x={x[i]:6.3f}  local weights {np.round(run.w_local[i], 4)}")
far = (np.abs(x - 10) >= 0.5) & (np.abs(x - 15) >= 0.5)
print("        max error away from the breakpoints:", f"{run.abs_error[far].max():.2e}")
print("        max error overall:", f"{run.abs_error.max():.2f}")

# time: f1 is right for lead times 0..2, f2 from 3 on
run = run_experiment("time")
for t, w in enumerate(run.w_time):
    print(f"time    t={t}  time weights {np.round(w, 4)}")
print("        max error:", f"{run.abs_error.max():.2e}")
