"""
Reconstructing the velocity field from postselected weak values
===============================================================

Two packets interfere. Each experiment records a weak momentum and a strong
position. Binning the weak values by strong outcome gives the conditional
mean, which tracks the Bohmian velocity across the fringes.
"""

import warnings

import numpy as np

from weakvalues.experiment import (
    ExperimentConfig,
    bohmian_reference,
    run_ensemble,
    sign_alternations,
    velocity_field,
)

cfg = ExperimentConfig(n_experiments=20000, mode="ideal-operator", seed=7)
records = run_ensemble(cfg)
with warnings.catch_warnings():
    # the default device sits close to the condition-ratio limit
    warnings.simplefilter("ignore", RuntimeWarning)
    vf = velocity_field(records, cfg)
_, v_ref = bohmian_reference(cfg)

print(f"condition ratio {vf.condition_ratio:.3g}")
print(f"{'x_s [nm]':>9} {'count':>6} {'<v>':>10} {'+-':>8} {'Bohm':>10}")
for x, n, v, e, r in zip(vf.x, vf.counts, vf.velocity, vf.stderr, v_ref):
    if n >= 50:
        print(f"{x * 1e9:9.1f} {n:6d} {v:10.0f} {e:8.0f} {r:10.0f}")
print("sign alternations about v0:", sign_alternations(vf, cfg.central_velocity()))
