"""
Semiclassical electron gas in the metallic cables.

Each cable is a box of ``N_P`` electrons that interact through the softened
Coulomb kernel among themselves and with the system electron, and with the
uniform positive background that keeps each cable neutral. A Langevin
thermostat (BAOAB splitting) stands in for the phonon bath. Walls reflect
specularly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import roots_legendre

from . import _kernels
from .constants import DEFAULT_PERMITTIVITY, DEFAULT_SOFTENING, K_B, M_E, Q_E
from .electrostatics import Box, RectSurface, flux_exact, flux_gradient


@dataclass(frozen=True)
class ThermostatParams:
    """Langevin bath. ``friction`` is the momentum relaxation rate (1/s)."""

    friction: float = 5e13
    temperature: float = 300.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.friction < 0:
            raise ValueError("friction must be non-negative")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class CableRegion:
    box: Box
    n_electrons: int = 100
    temperature: float = 300.0
    distance: Optional[float] = None

    def __post_init__(self):
        if self.n_electrons < 1:
            raise ValueError("a cable needs at least one electron")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not self.box.volume > 0:
            raise ValueError("cable box has zero volume")

    @property
    def density(self):
        return self.n_electrons / self.box.volume


@dataclass(frozen=True)
class ProbeElectron:
    position: np.ndarray
    velocity: np.ndarray


@dataclass
class ProbeState:
    """Mutable positions and velocities (N, 3) of every probe electron, cable by cable."""

    positions: np.ndarray
    velocities: np.ndarray
    forces: Optional[np.ndarray] = field(default=None, repr=False)

    def copy(self):
        f = None if self.forces is None else self.forces.copy()
        return ProbeState(self.positions.copy(), self.velocities.copy(), f)

    def __len__(self):
        return len(self.positions)

    def electrons(self):
        return [ProbeElectron(p.copy(), v.copy()) for p, v in zip(self.positions, self.velocities)]

    def kinetic_energy(self, mass=M_E):
        return 0.5 * mass * np.sum(self.velocities**2, axis=1)


def init_probe(region: CableRegion, rng, mass: float = M_E) -> ProbeState:
    """Uniform positions in the box and Maxwell-Boltzmann velocities at the cable temperature."""
    lo, size = np.asarray(region.box.lo), region.box.size
    pos = lo + size * rng.random((region.n_electrons, 3))
    vel = np.sqrt(K_B * region.temperature / mass) * rng.standard_normal((region.n_electrons, 3))
    return ProbeState(pos, vel)


def _gauss_box(box: Box, order):
    """Gauss-Legendre nodes and weights over a box (weights sum to its volume)."""
    pts, wts = [], []
    for d in range(3):
        x, w = roots_legendre(order[d])
        lo, hi = box.lo[d], box.hi[d]
        pts.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        wts.append(0.5 * (hi - lo) * w)
    P = np.stack(np.meshgrid(*pts, indexing="ij"), axis=-1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", *wts).ravel()
    return P, W


class ProbeGas:
    """Dynamics of all cable electrons for one device.

    Electrons of cable ``c`` occupy the slice ``slices[c]`` of the state arrays.
    """

    def __init__(self, regions: Sequence[CableRegion], thermostat: ThermostatParams = ThermostatParams(),
                 permittivity: float = DEFAULT_PERMITTIVITY, softening: float = DEFAULT_SOFTENING,
                 charge: float = Q_E, mass: float = M_E, system_charge: float = Q_E):
        self.regions = tuple(regions)
        self.thermostat = thermostat
        self.permittivity, self.mass, self.charge = permittivity, mass, charge
        self.a2 = softening**2
        self.k = charge * charge / (4 * np.pi * permittivity)
        self.k_sys = charge * system_charge / (4 * np.pi * permittivity)
        bounds = np.cumsum([0] + [r.n_electrons for r in self.regions])
        self.slices = [slice(int(bounds[i]), int(bounds[i + 1])) for i in range(len(self.regions))]
        self.n_total = int(bounds[-1])
        self._lo = [np.asarray(r.box.lo, dtype=float) for r in self.regions]
        self._hi = [np.asarray(r.box.hi, dtype=float) for r in self.regions]
        self._bg = [-self.k * r.density for r in self.regions]
        self._tables = [self._background_table(r.box) for r in self.regions]

    def background_force(self, pos):
        """Exact force (N) of all neutralizing backgrounds at ``pos``."""
        out = np.zeros_like(np.asarray(pos, dtype=float))
        for lo, hi, coef in zip(self._lo, self._hi, self._bg):
            _kernels.add_box_field(np.ascontiguousarray(pos, dtype=float), lo, hi, coef, out)
        return out

    def _background_table(self, box, spacing=1e-9):
        # The background field is smooth inside a cable, so a tabulated copy
        # replaces the per-step corner sums.
        lo, size = np.asarray(box.lo, dtype=float), box.size
        n = np.clip(np.ceil(size / spacing).astype(int) + 1, 2, 129)
        axes = [np.linspace(lo[d], lo[d] + size[d], n[d]) for d in range(3)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        table = self.background_force(grid).reshape(*n, 3)
        return lo, (n - 1) / size, np.ascontiguousarray(table)

    def initial_state(self, rng) -> ProbeState:
        parts = [init_probe(r, rng, self.mass) for r in self.regions]
        return ProbeState(np.concatenate([p.positions for p in parts]),
                          np.concatenate([p.velocities for p in parts]))

    def forces(self, pos, system_position=None, out=None):
        """Total force (N) on every probe electron."""
        if out is None:
            out = np.empty_like(pos)
        _kernels.pair_forces(pos, self.k, self.a2, out)
        for s, (lo, inv_h, table) in zip(self.slices, self._tables):
            _kernels.add_table_field(pos[s], lo, inv_h, table, out[s])
        if system_position is not None:
            src = np.array([float(system_position), 0.0, 0.0])
            _kernels.add_point_force(pos, src, self.k_sys, self.a2, out)
        return out

    def step(self, state: ProbeState, system_position, dt, rng, thermostat: Optional[ThermostatParams] = None):
        """One BAOAB Langevin step in place; returns ``state``."""
        th = thermostat or self.thermostat
        if state.forces is None:
            state.forces = self.forces(state.positions, system_position)
        x, v = state.positions, state.velocities
        v += (0.5 * dt / self.mass) * state.forces
        x += 0.5 * dt * v
        self._reflect(x, v)
        if th.friction > 0:
            c1 = np.exp(-th.friction * dt)
            c2 = np.sqrt((1 - c1 * c1) * K_B * th.temperature / self.mass)
            v *= c1
            v += c2 * rng.standard_normal(v.shape)
        x += 0.5 * dt * v
        self._reflect(x, v)
        self.forces(x, system_position, state.forces)
        v += (0.5 * dt / self.mass) * state.forces
        return state

    def _reflect(self, x, v):
        for s, lo, hi in zip(self.slices, self._lo, self._hi):
            xs, vs = x[s], v[s]
            _kernels.reflect(xs, vs, lo, hi)

    def background_potential(self, nodes, order=(12, 12, 24)):
        """Potential energy (J) of the system electron from the positive backgrounds (negative)."""
        nodes = np.asarray(nodes, dtype=float)
        out = np.zeros(nodes.shape)
        for r in self.regions:
            P, W = _gauss_box(r.box, order)
            for chunk in range(0, len(P), 1024):
                p, w = P[chunk:chunk + 1024], W[chunk:chunk + 1024]
                d2 = (nodes[:, None] - p[None, :, 0]) ** 2 + p[None, :, 1] ** 2 + p[None, :, 2] ** 2 + self.a2
                out -= self.k_sys * r.density * np.sum(w / np.sqrt(d2), axis=1)
        return out

    def potential_on_axis(self, nodes, pos, out=None):
        """Potential energy (J) of the system electron at axis points from the probe electrons."""
        nodes = np.asarray(nodes, dtype=float)
        if out is None:
            out = np.empty(nodes.shape)
        _kernels.potential_on_axis(nodes, pos, self.k_sys, self.a2, out)
        return out

    def flux(self, pos, surface: RectSurface):
        """Total flux (V m) of all probe electrons through ``surface``."""
        return float(np.sum(flux_exact(pos, surface, self.charge, self.permittivity)))

    def temperature(self, state: ProbeState):
        """Kinetic temperature (K) of the gas."""
        return float(self.mass * np.mean(state.velocities**2) / K_B)


def step_probe(state: ProbeState, system_position, regions: Sequence[CableRegion],
               thermostat: ThermostatParams, dt: float, rng, **kw) -> ProbeState:
    """Advance the cable electrons by one Langevin step (in place)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return ProbeGas(regions, thermostat, **kw).step(state, system_position, dt, rng)


def probe_current_contribution(state: ProbeState, surface: RectSurface,
                               permittivity: float = DEFAULT_PERMITTIVITY, charge: float = Q_E) -> float:
    """``sum_k eps grad(Phi_k) . v_k`` over the probe electrons only (A)."""
    G = flux_gradient(state.positions, surface, charge, permittivity)
    return float(permittivity * np.sum(G * state.velocities))
