"""Weak values of electron momentum from displacement currents in multiterminal devices."""

from .constants import HBAR, M_E, Q_E
from .electrostatics import DeviceGeometry, RectSurface, WeightingField
from .errors import WeakValuesError
from .experiment import ExperimentConfig, ExperimentRecord, VelocityField, run_ensemble, run_single_experiment
from .quantum import GaussianPacketSpec, GridSpec, WaveField

__all__ = [
    "HBAR", "M_E", "Q_E", "DeviceGeometry", "RectSurface", "WeightingField", "WeakValuesError",
    "ExperimentConfig", "ExperimentRecord", "VelocityField", "run_ensemble", "run_single_experiment",
    "GaussianPacketSpec", "GridSpec", "WaveField",
]
