"""
Flat ``key_unit = value`` configuration files.

Every physical key carries its unit as a suffix (``length_nm = 280``,
``packet_energy_eV = 0.0905``, ``t_m_ps = 0.3``). Lines starting with ``#``
are comments. Unknown keys, wrong unit suffixes and bad values are all
collected and reported together in one :class:`ConfigError`.

A run manifest (JSON) is also accepted; its ``config`` block holds the
resolved values in SI units and reproduces the run exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .constants import EPS0, M_E
from .electrostatics import DeviceGeometry
from .errors import ConfigError
from .experiment import MODES, ExperimentConfig
from .probes import ThermostatParams
from .quantum import GaussianPacketSpec, GridSpec

UNITS = {
    "length": {"m": 1.0, "um": 1e-6, "nm": 1e-9, "pm": 1e-12},
    "area": {"m2": 1.0, "um2": 1e-12, "nm2": 1e-18},
    "time": {"s": 1.0, "ns": 1e-9, "ps": 1e-12, "fs": 1e-15},
    "frequency": {"Hz": 1.0, "GHz": 1e9, "THz": 1e12},
    "energy": {"eV": 1.0, "meV": 1e-3},
    "temperature": {"K": 1.0},
    "rate": {"per_s": 1.0, "per_ps": 1e12},
    "momentum": {"kg_m_per_s": 1.0},
    "angle": {"rad": 1.0},
}

# name -> (dimension or kind, default in SI units, group)
SCHEMA: Dict[str, Tuple[str, object, str]] = {
    "length": ("length", 280e-9, "device"),
    "weak_area": ("area", 1e-11, "device"),
    "n_tiles": ("int", 56, "device"),
    "tile_width": ("length", 5e-9, "device"),
    "relative_permittivity": ("float", 12.9, "device"),
    "cable_distance": ("length", 10e-9, "cables"),
    "cable_length": ("length", 40e-9, "cables"),
    "cable_cross_section": ("length", 20e-9, "cables"),
    "probe_count": ("int", 100, "cables"),
    "softening": ("length", 1e-9, "cables"),
    "temperature": ("temperature", 300.0, "thermostat"),
    "friction": ("rate", 5e13, "thermostat"),
    "packet_count": ("int", 2, "packets"),
    "packet_center": ("length", 60e-9, "packets"),
    "packet_separation": ("length", 50e-9, "packets"),
    "packet_width": ("length", 3e-9, "packets"),
    "packet_energy": ("energy", 0.0905, "packets"),
    "packet_phase": ("angle", 0.0, "packets"),
    "mass_ratio": ("float", 1.0, "packets"),
    "t0": ("time", 0.0, "timing"),
    "t_m": ("time", 0.3e-12, "timing"),
    "t_end": ("time", 0.5e-12, "timing"),
    "frequency": ("frequency", 50e12, "timing"),
    "dwell_time": ("time", None, "timing"),
    "experiments": ("int", 5000, "ensemble"),
    "seed": ("int", 20240607, "ensemble"),
    "mode": ("str", "full", "ensemble"),
    "batch_size": ("int", 16, "ensemble"),
    "grid_points": ("int", 2048, "numerics"),
    "grid_spacing": ("length", 0.4e-9, "numerics"),
    "dt": ("time", 1e-15, "numerics"),
    "burn_in": ("time", 100e-15, "numerics"),
    "node_spacing": ("length", 2e-9, "numerics"),
    "kraus_width": ("momentum", None, "operator"),
    "strong_delay": ("time", 0.0, "operator"),
    "histogram_bins": ("str", "fd", "output"),
    "trajectory_stride": ("int", 10, "output"),
    "sweep_frequencies": ("frequency-list", (500e12, 50e12), "sweep"),
    "sweep_distances": ("length-list", (5e-9, 10e-9, 20e-9, 40e-9), "sweep"),
    "sweep_seeds": ("int", 4, "sweep"),
}

SI_SUFFIX = {"length": "m", "area": "m2", "time": "s", "frequency": "Hz", "energy": "eV",
             "temperature": "K", "rate": "per_s", "momentum": "kg_m_per_s", "angle": "rad"}


def _dimension(kind):
    return kind[:-5] if kind.endswith("-list") else kind


def _split_key(key):
    """(name, unit) for a key; unit is None for dimensionless keys."""
    if key in SCHEMA:
        return key, None
    for name in sorted(SCHEMA, key=len, reverse=True):
        if key.startswith(name + "_"):
            return name, key[len(name) + 1:]
    return None, None


@dataclass
class ConfigFile:
    """Resolved settings: experiment config plus sweep and output options."""

    experiment: ExperimentConfig
    values: Dict[str, object]
    defaults_used: List[str] = field(default_factory=list)
    source: Optional[str] = None

    @property
    def sweep_frequencies(self):
        return tuple(self.values["sweep_frequencies"])

    @property
    def sweep_distances(self):
        return tuple(self.values["sweep_distances"])

    @property
    def sweep_seeds(self):
        return int(self.values["sweep_seeds"])

    @property
    def histogram_bins(self):
        b = self.values["histogram_bins"]
        return int(b) if str(b).isdigit() else b

    @property
    def trajectory_stride(self):
        return int(self.values["trajectory_stride"])

    def si_items(self):
        """Canonical ``key_unit -> value`` mapping in SI units."""
        out = {}
        for name, (kind, _, _) in SCHEMA.items():
            dim = _dimension(kind)
            key = name if dim not in SI_SUFFIX else f"{name}_{SI_SUFFIX[dim]}"
            v = self.values[name]
            out[key] = list(v) if isinstance(v, tuple) else v
        return out

    def hash(self):
        return config_hash(self.si_items())

    def with_overrides(self, **kw):
        """Copy with SI values replaced (``seed``, ``experiments``, ``mode`` ...)."""
        values = dict(self.values)
        for k, v in kw.items():
            if v is None:
                continue
            if k not in SCHEMA:
                raise ConfigError([f"unknown key '{k}'"])
            values[k] = v
        defaults = [d for d in self.defaults_used if d not in kw or kw[d] is None]
        return build_config(values, defaults, self.source)


def config_hash(items: Dict[str, object]) -> str:
    blob = json.dumps(items, sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _parse_value(name, unit, raw, problems):
    kind = SCHEMA[name][0]
    dim = _dimension(kind)
    if dim in UNITS:
        if unit is None:
            problems.append(f"'{name}' needs a unit suffix, one of {sorted(UNITS[dim])}")
            return None
        scale = UNITS[dim].get(unit)
        if scale is None:
            problems.append(f"unit violation: '{name}_{unit}' (allowed units for {name}: {sorted(UNITS[dim])})")
            return None
    elif unit is not None:
        problems.append(f"unit violation: '{name}' is dimensionless, got suffix '{unit}'")
        return None
    else:
        scale = 1.0
    s = str(raw).strip()
    try:
        if kind.endswith("-list"):
            vals = tuple(float(t) * scale for t in s.replace(";", ",").split(",") if t.strip())
            if not vals:
                raise ValueError
            return vals
        if kind == "int":
            f = float(s)
            if f != int(f):
                raise ValueError
            return int(f)
        if kind == "str":
            return s
        if s.lower() in ("none", "auto", ""):
            if SCHEMA[name][1] is None:
                return None
            raise ValueError
        return float(s) * scale
    except ValueError:
        problems.append(f"bad value for '{name}': {raw!r}")
        return None


def parse_text(text: str, source: Optional[str] = None) -> ConfigFile:
    problems = []
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (t.strip() for t in line.split("=", 1))
        name, unit = _split_key(key)
        if name is None:
            problems.append(f"unknown key '{key}' (line {lineno})")
            continue
        if name in values:
            problems.append(f"duplicate key '{name}' (line {lineno})")
            continue
        v = _parse_value(name, unit, raw, problems)
        values[name] = v
    if problems:
        raise ConfigError(problems)
    return _fill(values, source)


def _fill(values, source):
    defaults = [k for k in SCHEMA if k not in values]
    full = {k: values.get(k, SCHEMA[k][1]) for k in SCHEMA}
    return build_config(full, defaults, source)


def _from_manifest(data, source):
    cfg = data.get("config")
    if not isinstance(cfg, dict):
        raise ConfigError(["manifest has no 'config' block"])
    problems, values = [], {}
    for key, v in cfg.items():
        name, unit = _split_key(key)
        if name is None:
            problems.append(f"unknown key '{key}' in manifest")
            continue
        if isinstance(v, list):
            v = ",".join(repr(x) for x in v)
        values[name] = _parse_value(name, unit, "none" if v is None else v, problems)
    if problems:
        raise ConfigError(problems)
    return _fill(values, source)


def load_config(path) -> ConfigFile:
    """Read a ``.cfg`` text file or a run manifest (``.json``)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {p}"])
    text = p.read_text()
    if p.suffix == ".json":
        try:
            return _from_manifest(json.loads(text), str(p))
        except json.JSONDecodeError as exc:
            raise ConfigError([f"manifest is not valid JSON: {exc}"]) from None
    return parse_text(text, str(p))


def parse_config(path) -> ExperimentConfig:
    """Validated :class:`ExperimentConfig` from a config file."""
    return load_config(path).experiment


def default_config() -> ConfigFile:
    return _fill({}, None)


def build_config(values: Dict[str, object], defaults_used=(), source=None) -> ConfigFile:
    problems = []
    v = values
    if v["mode"] not in MODES:
        problems.append(f"mode must be one of {', '.join(MODES)}, got '{v['mode']}'")
    if v["packet_count"] not in (1, 2):
        problems.append("packet_count must be 1 or 2")
    for k in ("length", "weak_area", "tile_width", "packet_width", "packet_energy", "dt",
              "grid_spacing", "softening", "node_spacing", "temperature", "relative_permittivity",
              "mass_ratio", "cable_length", "cable_cross_section", "cable_distance"):
        if not (v[k] is not None and v[k] > 0):
            problems.append(f"'{k}' must be positive")
    for k in ("n_tiles", "probe_count", "experiments", "grid_points", "batch_size",
              "trajectory_stride", "sweep_seeds"):
        if v[k] < 1:
            problems.append(f"'{k}' must be at least 1")
    if v["friction"] < 0:
        problems.append("'friction' must be non-negative")
    hb = v["histogram_bins"]
    if not (str(hb).isdigit() or hb == "fd"):
        problems.append(f"histogram_bins must be a bin count or 'fd', got '{hb}'")
    if problems:
        raise ConfigError(problems)

    geo = DeviceGeometry.build(v["length"], v["relative_permittivity"] * EPS0, v["weak_area"],
                               v["n_tiles"], v["tile_width"], 0.0, v["cable_distance"],
                               v["cable_length"], v["cable_cross_section"])
    centers = [v["packet_center"]] + ([v["packet_center"] + v["packet_separation"]]
                                      if v["packet_count"] == 2 else [])
    packets = tuple(GaussianPacketSpec(c, v["packet_width"], v["packet_energy"],
                                       relative_phase=v["packet_phase"] if i else 0.0)
                    for i, c in enumerate(centers))
    try:
        grid = GridSpec.around(0.0, v["length"], dx=v["grid_spacing"], n_points=v["grid_points"])
        thermostat = ThermostatParams(v["friction"], v["temperature"])
        cfg = ExperimentConfig(
            geometry=geo, packets=packets, probe_count=v["probe_count"], temperature=v["temperature"],
            thermostat=thermostat, t0=v["t0"], t_m=v["t_m"], t_end=v["t_end"], frequency=v["frequency"],
            n_experiments=v["experiments"], seed=v["seed"], mode=v["mode"], mass=v["mass_ratio"] * M_E,
            grid=grid, dt=v["dt"], softening=v["softening"], burn_in=v["burn_in"],
            node_spacing=v["node_spacing"], batch_size=v["batch_size"], kraus_width=v["kraus_width"],
            strong_delay=v["strong_delay"], dwell_time=v["dwell_time"])
    except (ValueError, TypeError) as exc:
        raise ConfigError([str(exc)]) from None
    problems = cfg.problems()
    for pk in packets:
        if pk.center - 5 * pk.width < grid.x_min or pk.center + 5 * pk.width > grid.x_max:
            problems.append(f"packet at {pk.center:.3e} m does not fit the grid")
    if problems:
        raise ConfigError(problems)
    return ConfigFile(cfg, dict(v), list(defaults_used), source)


def render_config(cf: ConfigFile) -> str:
    """Text form of a resolved config in SI units, defaults marked."""
    lines = []
    group = None
    items = cf.si_items()
    for (name, (_, _, g)), (key, val) in zip(SCHEMA.items(), items.items()):
        if g != group:
            lines.append(f"# {g}")
            group = g
        if isinstance(val, list):
            val = ", ".join(repr(x) for x in val)
        note = "  # default" if name in cf.defaults_used else ""
        lines.append(f"{key} = {val}{note}")
    return "\n".join(lines) + "\n"
