"""
One-dimensional conditional wave function of the system electron.

The state lives on a uniform grid and is advanced with a Strang split-step
Fourier propagator. Bohmian velocities are read off the local phase gradient,
``v = (hbar/m) Im(psi'/psi)``, and trajectories are integrated with an explicit
midpoint rule.

All quantities are SI. Wave-packet widths follow the amplitude convention
``psi ~ exp(-(x - x0)^2 / (2 sigma^2))``, so ``|psi|^2`` has standard deviation
``sigma / sqrt(2)`` and the free width grows as ``sigma sqrt(1 + (hbar t / m sigma^2)^2)``.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
import scipy.fft as sfft

from .constants import DEFAULT_DT, DEFAULT_PERMITTIVITY, DEFAULT_SOFTENING, EV, HBAR, M_E, Q_E
from .errors import (
    EnergyToleranceError,
    GridError,
    NodeError,
    NormalizationError,
    TrajectoryEscape,
)

BOUNDARIES = ("absorbing-mask", "periodic-padded")
NODE_THRESHOLD = 1e-12
_STENCIL = np.arange(-3, 5)  # 8-point Lagrange stencil around floor(s)


@dataclass(frozen=True)
class GridSpec:
    """Uniform 1D grid. Defaults: 4096 points at 0.2 nm, device [0, 280 nm] centred."""

    x_min: float = -269.6e-9
    dx: float = 0.2e-9
    n_points: int = 4096
    boundary: str = "absorbing-mask"
    mask_fraction: float = 0.05

    def __post_init__(self):
        if not self.dx > 0:
            raise GridError(f"dx must be positive, got {self.dx}")
        if self.n_points < 16:
            raise GridError(f"need at least 16 grid points, got {self.n_points}")
        if self.boundary not in BOUNDARIES:
            raise GridError(f"unknown boundary {self.boundary!r}; use one of {BOUNDARIES}")
        if not 0 <= self.mask_fraction < 0.5:
            raise GridError("mask_fraction must lie in [0, 0.5)")

    @classmethod
    def around(cls, lo, hi, dx=0.2e-9, n_points=4096, **kw):
        """Grid of ``n_points`` centred on the interval [lo, hi]."""
        length = n_points * dx
        if length < hi - lo:
            raise GridError("grid shorter than the requested interval")
        return cls(x_min=0.5 * (lo + hi) - 0.5 * length, dx=dx, n_points=n_points, **kw)

    @property
    def length(self):
        return self.n_points * self.dx

    @property
    def x_max(self):
        return self.x_min + (self.n_points - 1) * self.dx

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def k(self):
        return 2.0 * np.pi * sfft.fftfreq(self.n_points, self.dx)

    @property
    def dp(self):
        return 2.0 * np.pi * HBAR / self.length

    def contains(self, x):
        return (np.asarray(x) >= self.x_min) & (np.asarray(x) <= self.x_max)

    def mask(self):
        """Absorbing profile: 1 in the interior, cos^(1/8) roll-off in the edge bands."""
        m = np.ones(self.n_points)
        if self.boundary != "absorbing-mask" or self.mask_fraction == 0:
            return m
        width = int(self.mask_fraction * self.n_points)
        if width == 0:
            return m
        ramp = np.cos(0.5 * np.pi * (np.arange(width, 0, -1) / width)) ** 0.125
        m[:width] = ramp
        m[-width:] = ramp[::-1]
        return m


@dataclass(frozen=True, eq=False)
class WaveField:
    """Snapshot of the conditional wave function; amplitudes are never mutated."""

    grid: GridSpec
    amplitudes: np.ndarray
    mass: float = M_E
    charge: float = Q_E
    time: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (self.grid.n_points,):
            raise GridError(f"amplitudes shape {a.shape} does not match grid ({self.grid.n_points},)")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def x(self):
        return self.grid.x

    @property
    def density(self):
        return np.abs(self.amplitudes) ** 2

    def norm(self):
        return float(np.sum(self.density) * self.grid.dx)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.amplitudes)))

    def evolved(self, amplitudes, dt):
        return replace(self, amplitudes=amplitudes, time=self.time + dt)

    def normalized(self):
        n = self.norm()
        if not np.isfinite(n) or n <= 0:
            raise NormalizationError("state has zero or non-finite norm")
        return replace(self, amplitudes=self.amplitudes / np.sqrt(n))

    def mean_position(self):
        return float(np.sum(self.x * self.density) * self.grid.dx / self.norm())

    def to_csv(self, path):
        """Write columns x_m, re_psi, im_psi, density."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_m", "re_psi", "im_psi", "density"])
            for x, a, d in zip(self.x, self.amplitudes, self.density):
                w.writerow([repr(float(x)), repr(float(a.real)), repr(float(a.imag)), repr(float(d))])


@dataclass(frozen=True)
class GaussianPacketSpec:
    """One Gaussian component. Give either ``energy_eV`` or ``velocity`` (m/s)."""

    center: float
    width: float
    energy_eV: float = 0.0
    velocity: Optional[float] = None
    relative_phase: float = 0.0
    weight: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"packet width must be positive, got {self.width}")
        if self.energy_eV < 0:
            raise ValueError("kinetic energy must be non-negative")

    def central_velocity(self, mass=M_E):
        if self.velocity is not None:
            return float(self.velocity)
        return float(np.sqrt(2.0 * self.energy_eV * EV / mass))


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Potential energy V(x) in joules sampled on ``grid``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise GridError("potential is not aligned with the grid")
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros(grid.n_points))


@dataclass
class BohmianTrajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    flagged: bool = False
    discard_reason: Optional[str] = None

    def position_at(self, t):
        return float(np.interp(t, self.times, self.positions))


def gaussian_packet(x, center, width, k0=0.0, phase=0.0):
    """Normalized packet ``(pi w^2)^(-1/4) exp(-(x-c)^2/(2w^2) + i k0 x + i phase)``."""
    return (np.pi * width**2) ** -0.25 * np.exp(
        -((x - center) ** 2) / (2.0 * width**2) + 1j * (k0 * x + phase)
    )


def build_superposition(specs: Sequence[GaussianPacketSpec], grid: GridSpec = GridSpec(),
                        mass: float = M_E, charge: float = Q_E, margin: float = 5.0) -> WaveField:
    """Normalized superposition of Gaussian packets at t = 0.

    Each packet carries the plane-wave factor ``exp(i m v0 x / hbar)``.
    Raises :class:`NormalizationError` when all weights vanish and
    :class:`GridError` when a packet is closer than ``margin`` widths to a grid edge.
    """
    if not specs or all(s.weight == 0 for s in specs):
        raise NormalizationError("superposition has no non-zero weight")
    x = grid.x
    psi = np.zeros(grid.n_points, dtype=complex)
    for s in specs:
        if s.center - margin * s.width < grid.x_min or s.center + margin * s.width > grid.x_max:
            raise GridError(f"packet at {s.center:.3e} m does not fit the grid with {margin} sigma margin")
        k0 = mass * s.central_velocity(mass) / HBAR
        psi += s.weight * gaussian_packet(x, s.center, s.width, k0, s.relative_phase)
    return WaveField(grid, psi, mass, charge, 0.0).normalized()


class Propagator:
    """Strang split-step propagator for fixed grid, mass and time step.

    ``step`` accepts a single state or a (batch, n_points) stack of states.
    """

    def __init__(self, grid: GridSpec, mass: float = M_E, dt: float = DEFAULT_DT):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.grid, self.mass, self.dt = grid, mass, dt
        self.kinetic = np.exp(-0.5j * HBAR * grid.k**2 * dt / mass)
        self.kinetic_half = np.exp(-0.25j * HBAR * grid.k**2 * dt / mass)
        mask = grid.mask()
        self.mask = None if np.all(mask == 1.0) else mask

    def half_potential_phase(self, V):
        return np.exp(-0.5j * self.dt * np.asarray(V) / HBAR)

    def step(self, amplitudes, half_phase=None):
        a = amplitudes if half_phase is None else amplitudes * half_phase
        a = sfft.ifft(sfft.fft(a, axis=-1) * self.kinetic, axis=-1)
        if half_phase is not None:
            a *= half_phase
        if self.mask is not None:
            a *= self.mask
        return a

    def step_with_midpoint(self, amplitudes, half_start=None, half_end=None):
        """One step plus the state at ``t + dt/2``; the potential may differ at the two ends.

        The midpoint state is the kinetic half step applied after the first
        potential kick, which costs one extra inverse FFT.
        """
        a = amplitudes if half_start is None else amplitudes * half_start
        ak = sfft.fft(a, axis=-1)
        mid = sfft.ifft(ak * self.kinetic_half, axis=-1)
        a = sfft.ifft(ak * self.kinetic, axis=-1)
        if half_end is not None:
            a *= half_end
        if self.mask is not None:
            a *= self.mask
        return a, mid


@functools.lru_cache(maxsize=32)
def _propagator(grid, mass, dt):
    return Propagator(grid, mass, dt)


def _potential_values(V, grid):
    if V is None:
        return None
    if isinstance(V, PotentialField):
        if V.grid != grid:
            raise GridError("potential grid differs from wave-function grid")
        V = V.values
    elif np.isscalar(V):
        V = np.full(grid.n_points, float(V))
    V = np.asarray(V, dtype=float)
    if V.shape != (grid.n_points,):
        raise GridError("potential is not aligned with the grid")
    if not np.all(np.isfinite(V)):
        raise ValueError("potential contains NaN or infinite values")
    return V


def energy(psi: WaveField, V=None):
    """Expectation value of the Hamiltonian (J)."""
    g = psi.grid
    a = psi.amplitudes
    ak = sfft.fft(a)
    kin = HBAR**2 / (2 * psi.mass) * np.sum(g.k**2 * np.abs(ak) ** 2) * g.dx / g.n_points
    pot = 0.0
    Vv = _potential_values(V, g)
    if Vv is not None:
        pot = np.sum(Vv * np.abs(a) ** 2) * g.dx
    return float((kin + pot) / psi.norm())


def propagate_step(psi: WaveField, V=None, dt: float = DEFAULT_DT, *,
                   energy_tolerance: Optional[float] = None) -> WaveField:
    """Advance ``psi`` by ``dt`` under potential ``V`` (PotentialField, array, scalar or None).

    With ``energy_tolerance`` set, the relative change of <H> over the step is
    checked and :class:`EnergyToleranceError` raised when exceeded.
    """
    Vv = _potential_values(V, psi.grid)
    prop = _propagator(psi.grid, psi.mass, float(dt))
    half = None if Vv is None else prop.half_potential_phase(Vv)
    out = psi.evolved(prop.step(psi.amplitudes, half), dt)
    if energy_tolerance is not None:
        e0, e1 = energy(psi, Vv), energy(out, Vv)
        if abs(e1 - e0) > energy_tolerance * max(abs(e0), 1e-300):
            raise EnergyToleranceError(f"relative energy change {abs(e1 - e0) / abs(e0):.2e} per step")
    return out


def evolve(psi: WaveField, t: float, V=None, dt: float = DEFAULT_DT) -> WaveField:
    """Propagate to ``psi.time + t`` with a fixed potential."""
    n = int(round(t / dt))
    if n < 0:
        raise ValueError("cannot evolve backwards")
    Vv = _potential_values(V, psi.grid)
    prop = _propagator(psi.grid, psi.mass, float(dt))
    half = None if Vv is None else prop.half_potential_phase(Vv)
    a = psi.amplitudes
    for _ in range(n):
        a = prop.step(a, half)
    return replace(psi, amplitudes=a, time=psi.time + n * dt)


def spectral_derivative(psi: WaveField):
    return sfft.ifft(1j * psi.grid.k * sfft.fft(psi.amplitudes))


def _lagrange_coefficients():
    o = _STENCIL.astype(float)
    C = np.empty((len(o), len(o)))
    for j in range(len(o)):
        others = np.delete(o, j)
        C[j] = np.polynomial.polynomial.polyfromroots(others) / np.prod(o[j] - others)
    D = C[:, 1:] * np.arange(1, len(o))
    return C, D


_LAGRANGE_C, _LAGRANGE_D = _lagrange_coefficients()


def lagrange_weights(s):
    """Value and derivative weights of the 8-point stencil at fractional offsets ``s`` in [0, 1)."""
    s = np.asarray(s, dtype=float)
    powers = s[..., None] ** np.arange(len(_STENCIL))
    return powers @ _LAGRANGE_C.T, powers[..., :-1] @ _LAGRANGE_D.T


def _stencil(grid, x):
    u = (np.asarray(x, dtype=float) - grid.x_min) / grid.dx
    i0 = np.floor(u).astype(int)
    idx = i0[..., None] + _STENCIL
    if np.any(idx < 0) or np.any(idx >= grid.n_points):
        raise TrajectoryEscape("evaluation point too close to the grid edge")
    return idx, u - i0


def _carrier(psi):
    """Dominant wave number, removed before interpolation and restored afterwards."""
    ak = np.abs(sfft.fft(psi.amplitudes)) ** 2
    return float(np.sum(psi.grid.k * ak) / np.sum(ak))


def _interp_pair(psi, x):
    """Interpolate psi and its spectral derivative at ``x`` (demodulated Lagrange)."""
    g = psi.grid
    kc = _carrier(psi)
    x = np.asarray(x, dtype=float)
    idx, s = _stencil(g, x)
    w, _ = lagrange_weights(s)
    xs = g.x[idx]
    demod = np.exp(-1j * kc * (xs - x[..., None]))
    a = np.sum(w * psi.amplitudes[idx] * demod, axis=-1)
    d = np.sum(w * spectral_derivative(psi)[idx] * demod, axis=-1)
    return a, d


def _check_nodes(psi, a, threshold):
    rho = np.abs(a) ** 2
    bad = rho < threshold * np.max(psi.density)
    if np.any(bad):
        raise NodeError(f"|psi|^2 below {threshold:g} x max at {np.count_nonzero(bad)} point(s)")


def guidance_velocity(psi: WaveField, x, node_threshold: float = NODE_THRESHOLD):
    """Bohmian velocity ``(hbar/m) Im(psi'/psi)`` at ``x`` (scalar or array)."""
    a, d = _interp_pair(psi, x)
    _check_nodes(psi, a, node_threshold)
    v = HBAR / psi.mass * np.imag(d / a)
    return float(v) if np.ndim(v) == 0 else v


def current_density(psi: WaveField, x=None):
    """Probability current ``J = (hbar/m) Im(psi* psi')`` on the grid or at ``x``."""
    if x is None:
        return HBAR / psi.mass * np.imag(np.conj(psi.amplitudes) * spectral_derivative(psi))
    a, d = _interp_pair(psi, x)
    j = HBAR / psi.mass * np.imag(np.conj(a) * d)
    return float(j) if np.ndim(j) == 0 else j


def density_at(psi: WaveField, x):
    a, _ = _interp_pair(psi, x)
    r = np.abs(a) ** 2
    return float(r) if np.ndim(r) == 0 else r


@dataclass(frozen=True, eq=False)
class MomentumSpectrum:
    """Momentum distribution |a(p)|^2 on the FFT momentum grid (sorted by p)."""

    p: np.ndarray
    density: np.ndarray
    amplitudes: np.ndarray = field(repr=False, default=None)

    @property
    def dp(self):
        return float(self.p[1] - self.p[0])

    def mean(self):
        return float(np.sum(self.p * self.density) * self.dp)

    def std(self):
        m = self.mean()
        return float(np.sqrt(np.sum((self.p - m) ** 2 * self.density) * self.dp))

    def peak(self):
        return float(self.p[np.argmax(self.density)])

    def cdf(self):
        c = np.cumsum(self.density) * self.dp
        return c / c[-1]


def momentum_spectrum(psi: WaveField) -> MomentumSpectrum:
    g = psi.grid
    p = HBAR * sfft.fftshift(g.k)
    # restore the grid-origin phase so ``amplitudes`` is the continuum transform
    a = sfft.fftshift(sfft.fft(psi.amplitudes)) * g.dx / np.sqrt(2 * np.pi * HBAR) * np.exp(-1j * p * g.x_min / HBAR)
    return MomentumSpectrum(p, np.abs(a) ** 2, a)


def sample_positions(density, grid: GridSpec, count, rng):
    """Inverse-CDF sampling of a non-negative grid density (piecewise-linear CDF)."""
    if count <= 0:
        raise ValueError("sample count must be positive")
    d = np.asarray(density, dtype=float)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]))])
    if cdf[-1] <= 0:
        raise NormalizationError("density integrates to zero")
    cdf /= cdf[-1]
    return np.interp(rng.random(count), cdf, grid.x)


def sample_initial_positions(psi0: WaveField, count: int, rng) -> np.ndarray:
    """Draw ``count`` positions distributed as |psi0|^2; deterministic for a seeded ``rng``."""
    return sample_positions(psi0.density, psi0.grid, count, rng)


def advance_trajectory(psi_t: WaveField, X: float, dt: float, V=None,
                       node_threshold: float = NODE_THRESHOLD) -> float:
    """One explicit-midpoint step of ``dX/dt = v(psi, X)``.

    The half-step velocity is evaluated on ``psi`` propagated by ``dt/2``.
    """
    if not psi_t.grid.contains(X):
        raise TrajectoryEscape(f"X = {X:.4e} m outside the grid")
    v0 = guidance_velocity(psi_t, X, node_threshold)
    xh = X + 0.5 * dt * v0
    psi_h = propagate_step(psi_t, V, 0.5 * dt)
    X1 = X + dt * guidance_velocity(psi_h, xh, node_threshold)
    if not psi_t.grid.contains(X1):
        raise TrajectoryEscape(f"trajectory left the grid at X = {X1:.4e} m")
    return float(X1)


class TrajectoryIntegrator:
    """Midpoint integration of many trajectories against per-row or shared states.

    States are (B, N) stacks (or a single (N,) row shared by all trajectories).
    The caller supplies the states at ``t`` and ``t + dt/2``, for instance from
    :meth:`Propagator.step_with_midpoint`. A trajectory
    that meets a node (``|psi|^2 < threshold * max``) keeps its last velocity
    and is flagged.
    """

    def __init__(self, grid: GridSpec, mass: float = M_E, carrier_k: float = 0.0,
                 node_threshold: float = NODE_THRESHOLD):
        self.grid, self.mass, self.kc = grid, mass, carrier_k
        self.node_threshold = node_threshold
        self._demod = np.exp(-1j * carrier_k * grid.x)

    def velocity(self, rows, X, rho_max, last_v, flags):
        g = self.grid
        u = (X - g.x_min) / g.dx
        i0 = np.floor(u).astype(int)
        idx = i0[:, None] + _STENCIL
        escaped = (idx[:, 0] < 0) | (idx[:, -1] >= g.n_points)
        idx = np.clip(idx, 0, g.n_points - 1)
        w, dw = lagrange_weights(u - i0)
        if rows.ndim == 1:
            vals = rows[idx] * self._demod[idx]
        else:
            vals = np.take_along_axis(rows, idx, axis=1) * self._demod[idx]
        phi = np.sum(w * vals, axis=1)
        dphi = np.sum(dw * vals, axis=1) / g.dx
        rho = np.abs(phi) ** 2
        node = rho < self.node_threshold * rho_max
        with np.errstate(divide="ignore", invalid="ignore"):
            v = HBAR / self.mass * (self.kc + np.imag(dphi / phi))
        v = np.where(node | ~np.isfinite(v), last_v, v)
        flags |= node
        return v, escaped

    def step(self, rows_t, rows_half, X, dt, last_v, flags):
        """Advance ``X`` by ``dt`` given the states at ``t`` and ``t + dt/2``.

        Returns (new positions, velocity at the start, escaped mask).
        """
        rho_max = self._rho_max(rows_t)
        v0, esc0 = self.velocity(rows_t, X, rho_max, last_v, flags)
        xh = X + 0.5 * dt * v0
        vh, esc1 = self.velocity(rows_half, xh, rho_max, v0, flags)
        X1 = X + dt * vh
        escaped = esc0 | esc1 | ~self.grid.contains(X1)
        return X1, v0, escaped

    @staticmethod
    def _rho_max(rows):
        r = np.abs(rows) ** 2
        return r.max() if rows.ndim == 1 else r.max(axis=1)


def conditional_potential(probe_positions, grid: GridSpec = GridSpec(), softening: float = DEFAULT_SOFTENING,
                          charge: float = Q_E, permittivity: float = DEFAULT_PERMITTIVITY,
                          background=None) -> PotentialField:
    """Softened Coulomb potential energy felt on the x axis from point charges.

    ``V(x) = sum_k q^2 / (4 pi eps sqrt((x - X_k)^2 + rho_k^2 + a^2))`` minus an
    optional ``background`` array (the neutralizing mean field).
    """
    if not softening > 0:
        raise ValueError("softening length must be positive")
    P = np.asarray(probe_positions, dtype=float).reshape(-1, 3)
    V = np.zeros(grid.n_points)
    if len(P):
        x = grid.x[:, None]
        r2 = (x - P[:, 0]) ** 2 + P[:, 1] ** 2 + P[:, 2] ** 2 + softening**2
        V = charge**2 / (4 * np.pi * permittivity) * np.sum(1.0 / np.sqrt(r2), axis=1)
    if background is not None:
        V = V - np.asarray(background, dtype=float)
    return PotentialField(grid, V)


def wavefunction_error(psi: WaveField, psi_ref: WaveField) -> float:
    """``integral |psi - psi_ref|^2 dx``."""
    if psi.grid != psi_ref.grid:
        raise GridError("wave functions live on different grids")
    return float(np.sum(np.abs(psi.amplitudes - psi_ref.amplitudes) ** 2) * psi.grid.dx)


PotentialLike = Union[PotentialField, np.ndarray, float, None]
