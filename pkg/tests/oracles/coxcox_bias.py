"""Bias of the cox|cox fit versus sample size (10 replicates per size).

Supports the recovery tolerances used in the acceptance suite: the mean
absolute error must shrink as n grows from 500 to 4000.

    python3 tests/oracles/coxcox_bias.py
"""

import numpy as np

from recurreg.regression import fit_joint, parse_model
from recurreg.simulate import default_config, simulate_gsc

BETA = np.array([-1.0, -1.0])
THETA = np.array([1.0, 1.0])

if __name__ == "__main__":
    spec = parse_model("cox|cox")
    for n in (500, 1000, 2000, 4000):
        errs_b, errs_t, bias_b, bias_t = [], [], [], []
        for rep in range(10):
            ds, _ = simulate_gsc(default_config(n, seed=1000 + rep))
            fit = fit_joint(ds, spec)
            errs_b.append(np.max(np.abs(fit.rate.beta - BETA)))
            errs_t.append(np.max(np.abs(fit.hazard.theta - THETA)))
            bias_b.append(fit.rate.beta - BETA)
            bias_t.append(fit.hazard.theta - THETA)
        print(
            f"n={n:5d}  beta: mean bias {np.round(np.mean(bias_b, axis=0), 4)} max err {max(errs_b):.4f}  "
            f"theta: mean bias {np.round(np.mean(bias_t, axis=0), 4)} max err {max(errs_t):.4f}"
        )
