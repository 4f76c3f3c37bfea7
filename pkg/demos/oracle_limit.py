"""
When does the weak value equal the Bohmian velocity?
====================================================

The operator weak value at the strong outcome x_s reduces to J/rho when the
weak pointer is much wider in momentum than hbar over the strong width. The
condition ratio sigma_w sigma_s / hbar controls the approach.
"""

import numpy as np

from weakvalues.cli import oracle_comparison
from weakvalues.experiment import ExperimentConfig

cfg = ExperimentConfig()
for ratio in (100.0, 10.0, 1.0, 0.1):
    rows, ep, ev = oracle_comparison(cfg, ratio, n=101)
    print(f"ratio {ratio:6g}: max P error {ep:8.2%}   max velocity error {ev:8.2%}")

rows, _, _ = oracle_comparison(cfg, 100.0, n=8)
print(f"\n{'x [nm]':>8} {'P':>12} {'rho':>12} {'<p>/m':>10} {'J/rho':>10}")
for x, p, rho, v, vb in rows:
    print(f"{x * 1e9:8.2f} {p:12.4e} {rho:12.4e} {v:10.0f} {vb:10.0f}")
