"""
The weak-current mean follows the classical drift
=================================================

A single packet crosses the device. Each experiment reads one windowed current.
Averaged over the ensemble, it matches q v0 / L. This uses the ideal-operator
mode so it runs in seconds; pass ``--mode full`` to the CLI for the
probe-gas version.
"""

import numpy as np

from weakvalues.constants import Q_E
from weakvalues.experiment import ExperimentConfig, run_ensemble, single_packet_specs, weak_samples
from weakvalues.measurement import build_distribution, fit_gaussian_sigma

cfg = ExperimentConfig(packets=single_packet_specs(), n_experiments=4000, mode="ideal-operator", seed=3)
records = run_ensemble(cfg)
P = build_distribution(weak_samples(records))
expected = Q_E * cfg.central_velocity() / cfg.length

print(f"samples        {P.total}")
print(f"mean current   {P.mean():.4e} A +- {P.stderr():.1e}")
print(f"q v0 / L       {expected:.4e} A")
print(f"pointer sigma  {fit_gaussian_sigma(P).sigma:.3e} A")
print(f"|z|            {abs(P.mean() - expected) / P.stderr():.2f}")
