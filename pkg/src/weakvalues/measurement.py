"""
Pointer statistics and Gaussian measurement operators.

The weak ammeter reads the window-averaged total current through the large
surface. Its ensemble of readings forms the pointer distribution, from which
the response kernel and the Gaussian width are extracted. The strong
detectors are small tiles that fire when the electron reaches them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import stats

from .constants import DEFAULT_PERMITTIVITY, HBAR, M_E, Q_E
from .electrostatics import DeviceGeometry, WeightingField
from .errors import FitRejected, KernelNotExtractable, ProbabilityUnderflow
from .quantum import BohmianTrajectory, MomentumSpectrum, WaveField

BIMODALITY_LIMIT = 5.0 / 9.0


@dataclass(frozen=True)
class CurrentSample:
    value: float
    t_start: float
    t_end: float
    surface_id: str = "weak"

    @property
    def window(self):
        return self.t_end - self.t_start


@dataclass
class WeakTrace:
    """Quantities recorded along one experiment for windowed current readings.

    ``system_x`` is the system electron position and ``probe_flux`` the summed
    probe flux (V m) through the weak surface, both sampled at ``times``.
    Missing probe data means no probes were simulated.
    """

    times: np.ndarray
    system_x: np.ndarray
    probe_flux: Optional[np.ndarray] = None

    def value_at(self, series, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-6 * max(abs(t), 1e-18) + 1e-21:
            raise ValueError(f"time {t:.4e} s was not recorded")
        return series[i]


def measure_weak_current(trace: WeakTrace, t_m: float, frequency: float, length: float,
                         charge: float = Q_E, permittivity: float = DEFAULT_PERMITTIVITY,
                         t0: float = 0.0, dt: Optional[float] = None,
                         dwell_time: Optional[float] = None) -> CurrentSample:
    """Average total current over ``[t_m - 1/f, t_m]``.

    The time average of ``eps dPhi/dt`` is the flux difference over the
    window divided by its length, so the average is exact for any trace.
    The system electron enters through the parallel-plate weighting
    ``q v_x / L_x``.
    """
    T = 1.0 / frequency
    if dt is not None and T < dt * (1 - 1e-9):
        raise ValueError(f"window 1/f = {T:.3e} s is shorter than the time step {dt:.3e} s")
    if t_m - T < t0 - 1e-9 * T:
        raise ValueError("measurement window extends before the initial time")
    if dwell_time is not None and frequency >= 1.0 / dwell_time:
        warnings.warn(f"f = {frequency:.3g} Hz is not below 1/dwell time = {1 / dwell_time:.3g} Hz",
                      RuntimeWarning, stacklevel=2)
    t_a = t_m - T
    dx = trace.value_at(trace.system_x, t_m) - trace.value_at(trace.system_x, t_a)
    value = charge * dx / (T * length)
    if trace.probe_flux is not None:
        dphi = trace.value_at(trace.probe_flux, t_m) - trace.value_at(trace.probe_flux, t_a)
        value += permittivity * dphi / T
    return CurrentSample(float(value), t_a, t_m)


def _fd_edges(values):
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        w = max(abs(lo), 1.0) * 1e-9
        return np.array([lo - w, lo + w])
    return np.histogram_bin_edges(v, bins="fd")


@dataclass
class PointerDistribution:
    """Histogram of pointer readings, optionally with the raw readings kept."""

    edges: np.ndarray
    counts: np.ndarray
    time: float = 0.0
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("histogram bin widths must be positive")

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self):
        return np.diff(self.edges)

    def density(self):
        return self.counts / (self.total * self.widths)

    def mean(self):
        if self.samples is not None:
            return float(np.mean(self.samples))
        return float(np.sum(self.centers * self.counts) / self.total)

    def variance(self):
        if self.samples is not None:
            return float(np.var(self.samples))
        m = self.mean()
        return float(np.sum((self.centers - m) ** 2 * self.counts) / self.total)

    def stderr(self):
        return float(np.sqrt(self.variance() / self.total))

    def merge(self, other: "PointerDistribution") -> "PointerDistribution":
        """Combine partial histograms built on identical edges."""
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("cannot merge histograms with different edges")
        s = None
        if self.samples is not None and other.samples is not None:
            s = np.sort(np.concatenate([self.samples, other.samples]))
        return PointerDistribution(self.edges, self.counts + other.counts, self.time, s)


def build_distribution(samples, bins="fd", time: Optional[float] = None) -> PointerDistribution:
    """Histogram of pointer readings (``CurrentSample`` objects or plain values).

    ``bins`` is ``"fd"`` (Freedman-Diaconis), a bin count, or explicit edges.
    """
    vals = np.array([s.value if isinstance(s, CurrentSample) else s for s in samples], dtype=float)
    if vals.size == 0:
        raise ValueError("need at least one sample")
    if time is None:
        time = samples[0].t_end if isinstance(samples[0], CurrentSample) else 0.0
    if isinstance(bins, str):
        if bins != "fd":
            raise ValueError(f"unknown binning rule {bins!r}")
        edges = _fd_edges(vals)
    elif np.ndim(bins) == 0:
        if int(bins) < 1:
            raise ValueError("bin count must be positive")
        lo, hi = vals.min(), vals.max()
        edges = _fd_edges(vals) if lo == hi else np.linspace(lo, hi, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    counts, _ = np.histogram(vals, edges)
    return PointerDistribution(edges, counts, float(time), np.sort(vals))


def current_to_momentum(current, length, mass=M_E, charge=Q_E):
    """``p = I m L_x / q`` (parallel-plate relation)."""
    return np.asarray(current) * mass * length / charge


def momentum_to_current(p, length, mass=M_E, charge=Q_E):
    return np.asarray(p) * charge / (mass * length)


@dataclass(frozen=True)
class GaussianFit:
    mean: float
    sigma: float
    sigma_momentum: float
    count: int
    bimodality: float


def bimodality_coefficient(values):
    v = np.asarray(values, dtype=float)
    n = v.size
    if n < 4 or np.ptp(v) == 0:
        return 0.0
    g = stats.skew(v, bias=False)
    k = stats.kurtosis(v, bias=False)
    return float((g * g + 1) / (k + 3 * (n - 1) ** 2 / ((n - 2) * (n - 3))))


def fit_gaussian_sigma(P: PointerDistribution, length: float = 280e-9, mass: float = M_E,
                       charge: float = Q_E, bimodality_limit: float = BIMODALITY_LIMIT) -> GaussianFit:
    """Maximum-likelihood Gaussian fit of the pointer distribution.

    Raw samples are used when present (ML estimates are the sample mean and
    the biased standard deviation); otherwise the binned moments. Rejects
    distributions whose bimodality coefficient exceeds ``bimodality_limit``.
    """
    if P.samples is not None:
        values = P.samples
    else:
        values = np.repeat(P.centers, P.counts)
    if values.size < 2 or np.ptp(values) == 0:
        raise FitRejected("distribution is degenerate; no width to fit")
    b = bimodality_coefficient(values)
    if b > bimodality_limit:
        raise FitRejected(f"bimodality coefficient {b:.3f} exceeds {bimodality_limit:.3f}")
    mu, sigma = float(np.mean(values)), float(np.std(values))
    return GaussianFit(mu, sigma, float(current_to_momentum(sigma, length, mass, charge)), int(values.size), b)


@dataclass
class ResponseKernel:
    """Translation-invariant response ``g(I_tilde, I) = h(I_tilde - I)``.

    ``offsets`` are bin centers of ``I_tilde - I`` and ``values`` the density ``h``.
    """

    offsets: np.ndarray
    values: np.ndarray
    width_ratio: float

    def __call__(self, I_tilde, I):
        return np.interp(np.asarray(I_tilde) - np.asarray(I), self.offsets, self.values, left=0.0, right=0.0)

    def normalization(self):
        return float(np.trapezoid(self.values, self.offsets))

    def sigma(self):
        w = self.values / self.normalization()
        m = np.trapezoid(self.offsets * w, self.offsets)
        return float(np.sqrt(np.trapezoid((self.offsets - m) ** 2 * w, self.offsets)))


def extract_kernel(P: PointerDistribution, spectrum: MomentumSpectrum, length: float = 280e-9,
                   mass: float = M_E, charge: float = Q_E, min_ratio: float = 10.0) -> ResponseKernel:
    """Read the response kernel off ``P`` assuming the system current is sharp.

    With ``|a(I)|^2`` close to a delta at ``<I>``, ``g(I_tilde, <I>) = P(I_tilde)``.
    The approximation needs the pointer width to exceed the current-converted
    momentum width of the system by ``min_ratio``; otherwise
    :class:`KernelNotExtractable` is raised with the achieved ratio attached.
    """
    sys_sigma = float(momentum_to_current(spectrum.std(), length, mass, charge))
    sys_mean = float(momentum_to_current(spectrum.mean(), length, mass, charge))
    p_sigma = np.sqrt(P.variance())
    ratio = np.inf if sys_sigma == 0 else p_sigma / sys_sigma
    if ratio < min_ratio:
        err = KernelNotExtractable(f"pointer/system width ratio {ratio:.3g} < {min_ratio:g}")
        err.ratio = float(ratio)
        raise err
    dens = P.density()
    offsets = P.centers - sys_mean
    values = dens / np.trapezoid(dens, offsets) if len(dens) > 1 else dens
    return ResponseKernel(offsets, values, float(ratio))


@dataclass(frozen=True)
class GaussianKraus:
    """``K = C exp(-(b - center)^2 / (2 width^2))`` diagonal in ``basis``."""

    basis: str
    center: float
    width: float
    normalization: Optional[float] = None

    def __post_init__(self):
        if self.basis not in ("momentum", "position"):
            raise ValueError("basis must be 'momentum' or 'position'")
        if not self.width > 0:
            raise ValueError("Kraus width must be positive")
        if self.normalization is None:
            object.__setattr__(self, "normalization", (np.sqrt(np.pi) * self.width) ** -0.5)

    def at(self, center):
        return replace(self, center=float(center))

    def profile(self, b):
        return self.normalization * np.exp(-((np.asarray(b) - self.center) ** 2) / (2 * self.width**2))


def kraus_apply(psi: WaveField, K: GaussianKraus, underflow: float = 1e-300):
    """Apply ``K`` to ``psi``; return (normalized state, outcome probability density).

    The probability is the squared norm of ``K psi`` before renormalization.
    Momentum-basis operators act through the FFT on the same grid.
    """
    g = psi.grid
    if K.basis == "position":
        out = psi.amplitudes * K.profile(g.x)
    else:
        out = sfft.ifft(sfft.fft(psi.amplitudes) * K.profile(HBAR * g.k))
    prob = float(np.sum(np.abs(out) ** 2) * g.dx)
    if not prob > underflow:
        raise ProbabilityUnderflow(f"outcome probability {prob:.3e} below {underflow:.1e}")
    return replace(psi, amplitudes=out / np.sqrt(prob)), prob


def povm_completeness_residual(K: GaussianKraus, centers, basis_points) -> float:
    """``max_b |sum_c K_c(b)^2 dc - 1|`` with a Riemann sum over the center grid."""
    c = np.asarray(centers, dtype=float)
    b = np.asarray(basis_points, dtype=float)
    dc = np.gradient(c)
    total = np.sum(K.normalization**2 * np.exp(-((b[:, None] - c[None, :]) ** 2) / K.width**2) * dc, axis=1)
    return float(np.max(np.abs(total - 1.0)))


@dataclass(frozen=True)
class StrongOutcome:
    index: int
    x_s: float
    time: float


def detect_strong_position(trajectory: BohmianTrajectory, geometry: DeviceGeometry,
                           t_start: float = 0.0) -> Optional[StrongOutcome]:
    """Tile containing the electron at the first sample ``t >= t_start`` inside the tiled span."""
    edges = geometry.tile_edges()
    if len(edges) == 0:
        return None
    t = np.asarray(trajectory.times)
    x = np.asarray(trajectory.positions)
    sel = (t >= t_start - 1e-21) & (x >= edges[0]) & (x < edges[-1])
    if not np.any(sel):
        return None
    i = int(np.argmax(sel))
    k = geometry.tile_index(x[i])
    return StrongOutcome(k, float(geometry.tile_centers()[k]), float(t[i]))


def detect_strong_pulse(trajectory: BohmianTrajectory, geometry: DeviceGeometry, reference_velocity: float,
                        t_start: float = 0.0, charge: float = Q_E,
                        threshold_fraction: float = 0.5) -> Optional[StrongOutcome]:
    """First tile whose current pulse ``q |F . v|`` exceeds the trigger level.

    Tiles use the exponential weighting field centred on the tile; the trigger
    is ``threshold_fraction`` of the peak current ``q alpha v_ref`` of an
    electron crossing the tile center at ``reference_velocity``.
    """
    t = np.asarray(trajectory.times)
    sel = t >= t_start - 1e-21
    r = np.zeros((int(sel.sum()), 3))
    r[:, 0] = np.asarray(trajectory.positions)[sel]
    v = np.zeros_like(r)
    v[:, 0] = np.asarray(trajectory.velocities)[sel]
    ts = t[sel]
    first = None
    for k, tile in enumerate(geometry.strong_surfaces):
        field_k = WeightingField.exponential(tile)
        level = threshold_fraction * charge * field_k.alpha * abs(reference_velocity)
        I = charge * np.abs(np.sum(field_k.gradient(r) * v, axis=1))
        hit = np.nonzero(I >= level)[0]
        if len(hit) and (first is None or ts[hit[0]] < first[2]):
            first = (k, tile.center[0], ts[hit[0]])
    return None if first is None else StrongOutcome(first[0], float(first[1]), float(first[2]))
