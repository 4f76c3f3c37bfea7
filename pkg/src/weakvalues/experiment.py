"""
Two-time experiments: weak momentum reading at ``t_m`` followed by strong
position detection, repeated over an ensemble of initial positions.

Three backaction modes are available:

``full``
    The system wave function evolves in the fluctuating Coulomb potential of
    the cable electrons (conditional wave function per experiment).
``mean-field``
    The system feels only the mean field of the cables, which the neutral
    background cancels, so its wave function is the free one. The cables are
    still simulated and contribute noise to the weak reading.
``ideal-operator``
    No dynamics. Gaussian Kraus operators act on the freely evolved state:
    momentum at ``t_m``, free evolution by ``strong_delay``, then position.

Experiments are run in lockstep batches. Experiment ``j`` draws from its own
generator ``SeedSequence(seed, spawn_key=(j,))`` in a fixed order: initial
position, cable initial state, then thermostat noise.
"""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import DEFAULT_SOFTENING, HBAR, K_B, M_E, Q_E
from .electrostatics import DeviceGeometry, default_cable_boxes
from .errors import EmptyPostselection, ProbabilityUnderflow
from .measurement import (
    CurrentSample,
    GaussianKraus,
    StrongOutcome,
    WeakTrace,
    build_distribution,
    current_to_momentum,
    fit_gaussian_sigma,
    kraus_apply,
    measure_weak_current,
)
from .oracle import condition_ratio
from .probes import CableRegion, ProbeGas, ThermostatParams
from .quantum import (
    BohmianTrajectory,
    GaussianPacketSpec,
    GridSpec,
    Propagator,
    TrajectoryIntegrator,
    WaveField,
    build_superposition,
    current_density,
    momentum_spectrum,
    sample_positions,
    wavefunction_error,
)

log = logging.getLogger(__name__)

MODES = ("full", "mean-field", "ideal-operator")


def two_packet_specs(first_center=60e-9, separation=50e-9, width=3e-9, energy_eV=0.0905):
    return (GaussianPacketSpec(first_center, width, energy_eV),
            GaussianPacketSpec(first_center + separation, width, energy_eV))


def single_packet_specs(center=85e-9, width=3e-9, energy_eV=0.0905):
    return (GaussianPacketSpec(center, width, energy_eV),)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one ensemble needs; immutable and picklable."""

    geometry: DeviceGeometry = field(default_factory=DeviceGeometry.build)
    packets: tuple = field(default_factory=two_packet_specs)
    probe_count: int = 100
    temperature: float = 300.0
    thermostat: ThermostatParams = field(default_factory=ThermostatParams)
    t0: float = 0.0
    t_m: float = 0.3e-12
    t_end: float = 0.5e-12
    frequency: float = 50e12
    extra_frequencies: tuple = ()
    n_experiments: int = 5000
    seed: int = 20240607
    mode: str = "full"
    mass: float = M_E
    grid: GridSpec = field(default_factory=lambda: GridSpec.around(0.0, 280e-9, dx=0.4e-9, n_points=2048))
    dt: float = 1e-15
    softening: float = DEFAULT_SOFTENING
    burn_in: float = 100e-15
    node_spacing: float = 2e-9
    batch_size: int = 16
    kraus_width: Optional[float] = None
    strong_delay: float = 0.0
    dwell_time: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "packets", tuple(self.packets))
        object.__setattr__(self, "extra_frequencies", tuple(float(f) for f in self.extra_frequencies))

    def problems(self) -> List[str]:
        out = list(self.geometry.validate())
        if not self.t0 < self.t_m < self.t_end:
            out.append("times must satisfy t0 < t_m < t_end")
        if self.n_experiments < 1:
            out.append("number of experiments must be at least 1")
        if self.mode not in MODES:
            out.append(f"mode must be one of {MODES}")
        if not self.packets:
            out.append("at least one wave packet is required")
        if self.probe_count < 1:
            out.append("probe_count must be at least 1")
        for f in self.frequencies:
            if not f > 0:
                out.append("measurement frequency must be positive")
            elif 1.0 / f < self.dt * (1 - 1e-9):
                out.append(f"window 1/f = {1 / f:.3e} s is shorter than dt = {self.dt:.3e} s")
            elif self.t_m - 1.0 / f < self.t0 - 1e-21:
                out.append(f"window for f = {f:.3e} Hz starts before t0")
        if self.batch_size < 1:
            out.append("batch_size must be at least 1")
        return out

    @property
    def frequencies(self):
        fs = [self.frequency] + [f for f in self.extra_frequencies if f != self.frequency]
        return tuple(fs)

    @property
    def length(self):
        return self.geometry.length

    @property
    def n_steps_m(self):
        return int(round((self.t_m - self.t0) / self.dt))

    @property
    def n_steps_end(self):
        return int(round((self.t_end - self.t0) / self.dt))

    def regions(self):
        return tuple(CableRegion(b, self.probe_count, self.temperature) for b in self.geometry.cables)

    def probe_gas(self):
        return ProbeGas(self.regions(), self.thermostat, self.geometry.permittivity, self.softening,
                        Q_E, M_E, Q_E)

    def with_cable_distance(self, d, cable_length=None, cross_section=None):
        left, right = self.geometry.cables
        cl = cable_length or (left.hi[0] - left.lo[0])
        cs = cross_section or (left.hi[1] - left.lo[1])
        geo = replace(self.geometry, cables=default_cable_boxes(self.length, d, cl, cs))
        return replace(self, geometry=geo)

    def central_velocity(self):
        return self.packets[0].central_velocity(self.mass)


@dataclass
class ExperimentRecord:
    j: int
    weak_current: float
    p_w: float
    strong: Optional[StrongOutcome]
    trajectory: Optional[BohmianTrajectory]
    window_currents: Dict[float, float] = field(default_factory=dict)
    discard_reason: Optional[str] = None
    wave_error: Optional[float] = None
    flagged: bool = False

    @property
    def postselected(self):
        return self.strong is not None and self.discard_reason is None


def _rng(seed, j):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(j),)))


@dataclass
class _Reference:
    """Free (no-backaction) evolution shared by every experiment of a config."""

    psi0: WaveField
    rows: np.ndarray
    mids: np.ndarray
    carrier_k: float

    def at_step(self, k):
        return self.rows[k]

    def wavefield(self, k, t):
        return replace(self.psi0, amplitudes=self.rows[k], time=t)


_REF_CACHE: Dict[tuple, _Reference] = {}


def reference_evolution(config: ExperimentConfig) -> _Reference:
    key = (config.packets, config.grid, config.mass, config.dt, config.n_steps_end)
    ref = _REF_CACHE.get(key)
    if ref is not None:
        return ref
    psi0 = build_superposition(config.packets, config.grid, config.mass)
    prop = Propagator(config.grid, config.mass, config.dt)
    rows = np.empty((config.n_steps_end + 1, config.grid.n_points), dtype=complex)
    mids = np.empty((config.n_steps_end, config.grid.n_points), dtype=complex)
    rows[0] = psi0.amplitudes
    for k in range(config.n_steps_end):
        rows[k + 1], mids[k] = prop.step_with_midpoint(rows[k])
    kc = momentum_spectrum(psi0).mean() / HBAR
    ref = _Reference(psi0, rows, mids, kc)
    if len(_REF_CACHE) > 4:
        _REF_CACHE.clear()
    _REF_CACHE[key] = ref
    return ref


def estimated_pointer_sigma(config: ExperimentConfig, frequency: Optional[float] = None) -> float:
    """Rough current noise (A) of the cable electrons seen through the weak surface.

    Each electron close to the axis of a large surface contributes
    ``q g v_x`` with ``g = 2 sqrt(2) / (pi sqrt(S_w))``. Window averaging of
    an Ornstein-Uhlenbeck velocity with relaxation time ``1/gamma`` reduces
    the variance by ``2 (x - 1 + exp(-x)) / x^2`` with ``x = gamma / f``.
    """
    f = frequency or config.frequency
    g = 2 * np.sqrt(2) / (np.pi * np.sqrt(config.geometry.weak_surface.area))
    n = config.probe_count * len(config.geometry.cables)
    s = Q_E * g * np.sqrt(n * K_B * config.temperature / M_E)
    x = config.thermostat.friction / f
    factor = 1.0 if x == 0 else 2 * (x - 1 + np.exp(-x)) / x**2
    return float(s * np.sqrt(factor))


def _node_grid(config):
    n = int(round(config.length / config.node_spacing)) + 1
    return np.linspace(0.0, config.length, n)


def _run_dynamic_batch(config: ExperimentConfig, js: Sequence[int]) -> List[ExperimentRecord]:
    ref = reference_evolution(config)
    grid = config.grid
    B = len(js)
    dt = config.dt
    n_m, n_end = config.n_steps_m, config.n_steps_end
    full = config.mode == "full"
    rngs = [_rng(config.seed, j) for j in js]
    X = np.array([sample_positions(ref.psi0.density, grid, 1, r)[0] for r in rngs])

    gas = config.probe_gas()
    states = [gas.initial_state(r) for r in rngs]
    for _ in range(int(round(config.burn_in / dt))):
        for b in range(B):
            gas.step(states[b], X[b], dt, rngs[b])

    nodes = _node_grid(config)
    background = gas.background_potential(nodes)
    tmp_nodes = np.empty(nodes.shape)

    def potential_rows():
        V = np.empty((B, grid.n_points))
        for b in range(B):
            gas.potential_on_axis(nodes, states[b].positions, tmp_nodes)
            V[b] = np.interp(grid.x, nodes, tmp_nodes + background)
        return V

    window_steps = {f: n_m - int(round(1.0 / (f * dt))) for f in config.frequencies}
    flux_steps = set(window_steps.values()) | {n_m}
    flux_at: Dict[int, np.ndarray] = {}

    def record_flux(k):
        if k in flux_steps:
            flux_at[k] = np.array([gas.flux(states[b].positions, config.geometry.weak_surface) for b in range(B)])

    prop = Propagator(grid, config.mass, dt)
    integ = TrajectoryIntegrator(grid, config.mass, ref.carrier_k)
    rows = np.repeat(ref.rows[0][None, :], B, axis=0) if full else None
    half_now = np.exp(-0.5j * dt * potential_rows() / HBAR) if full else None

    xs = np.empty((B, n_end + 1))
    vs = np.full((B, n_end + 1), np.nan)
    xs[:, 0] = X
    last_v = np.zeros(B)
    flags = np.zeros(B, dtype=bool)
    escaped = np.zeros(B, dtype=bool)
    edges = config.geometry.tile_edges()
    detected_step = np.full(B, -1)
    wave_err = np.full(B, np.nan)
    record_flux(0)
    k_stop = n_end
    for k in range(n_end):
        for b in range(B):
            gas.step(states[b], X[b], dt, rngs[b])
        if full:
            # Strang step with the potential at both ends of the interval
            half_next = np.exp(-0.5j * dt * potential_rows() / HBAR)
            new_rows, mid = prop.step_with_midpoint(rows, half_now, half_next)
            X1, v_start, esc = integ.step(rows, mid, X, dt, last_v, flags)
            rows, half_now = new_rows, half_next
        else:
            X1, v_start, esc = integ.step(ref.rows[k], ref.mids[k], X, dt, last_v, flags)
        vs[:, k] = v_start
        last_v = v_start
        escaped |= esc
        X = np.where(escaped, X, X1)
        xs[:, k + 1] = X
        record_flux(k + 1)
        if k + 1 == n_m and full:
            ref_row = ref.rows[n_m]
            wave_err = np.sum(np.abs(rows - ref_row) ** 2, axis=1) * grid.dx
        if k + 1 >= n_m:
            inside = (X >= edges[0]) & (X < edges[-1]) & ~escaped
            newly = (detected_step < 0) & inside
            detected_step[newly] = k + 1
            if np.all((detected_step >= 0) | escaped):
                k_stop = k + 1
                break
    # velocity at the final sample
    rows_last = rows if full else ref.rows[k_stop]
    v_end, _ = integ.velocity(rows_last, X, integ._rho_max(rows_last), last_v, flags)
    vs[:, k_stop] = v_end

    times = config.t0 + dt * np.arange(k_stop + 1)
    records = []
    centers = config.geometry.tile_centers()
    for b, j in enumerate(js):
        traj = BohmianTrajectory(times, xs[b, :k_stop + 1].copy(), vs[b, :k_stop + 1].copy(),
                                 flagged=bool(flags[b]))
        reason = None
        if escaped[b]:
            reason = "trajectory-escape"
            traj.discard_reason = reason
        windows = {}
        for f, ks in window_steps.items():
            dX = xs[b, n_m] - xs[b, ks]
            T = (n_m - ks) * dt
            I = Q_E * dX / (T * config.length)
            I += config.geometry.permittivity * (flux_at[n_m][b] - flux_at[ks][b]) / T
            windows[f] = float(I)
        I_w = windows[config.frequency]
        strong = None
        if detected_step[b] >= 0 and reason is None:
            ks = int(detected_step[b])
            idx = config.geometry.tile_index(xs[b, ks])
            strong = StrongOutcome(int(idx), float(centers[idx]), float(times[ks]))
        records.append(ExperimentRecord(int(j), I_w, float(current_to_momentum(I_w, config.length, config.mass)),
                                        strong, traj, windows, reason,
                                        None if np.isnan(wave_err[b]) else float(wave_err[b]), bool(flags[b])))
    return records


def _run_operator_batch(config: ExperimentConfig, js: Sequence[int]) -> List[ExperimentRecord]:
    """Kraus pipeline: momentum Kraus at t_m, free evolution, position Kraus."""
    ref = reference_evolution(config)
    psi_m = ref.wavefield(config.n_steps_m, config.t_m)
    spec = momentum_spectrum(psi_m)
    sigma_k = config.kraus_width
    if sigma_k is None:
        sigma_ptr = current_to_momentum(estimated_pointer_sigma(config), config.length, config.mass)
        sigma_k = float(np.sqrt(2) * sigma_ptr)
    sigma_s = config.geometry.condition_width()
    edges = config.geometry.tile_edges()
    centers = config.geometry.tile_centers()
    cdf_p = spec.cdf()
    prop = Propagator(config.grid, config.mass, config.dt) if config.strong_delay > 0 else None
    n_delay = int(round(config.strong_delay / config.dt))
    records = []
    for j in js:
        rng = _rng(config.seed, j)
        # keep the draw order of the dynamic modes: initial position first
        sample_positions(ref.psi0.density, config.grid, 1, rng)
        p = float(np.interp(rng.random(), cdf_p, spec.p))
        p_w = p + sigma_k / np.sqrt(2) * rng.standard_normal()
        reason, strong = None, None
        try:
            psi_w, _ = kraus_apply(psi_m, GaussianKraus("momentum", p_w, sigma_k))
            a = psi_w.amplitudes
            for _ in range(n_delay):
                a = prop.step(a)
            dens = np.abs(a) ** 2
            x = sample_positions(dens, config.grid, 1, rng)[0] + sigma_s / np.sqrt(2) * rng.standard_normal()
            if edges[0] <= x < edges[-1]:
                idx = config.geometry.tile_index(x)
                strong = StrongOutcome(int(idx), float(centers[idx]), config.t_m + n_delay * config.dt)
        except ProbabilityUnderflow:
            reason = "probability-underflow"
        I_w = float(p_w * Q_E / (config.mass * config.length))
        records.append(ExperimentRecord(int(j), I_w, float(p_w), strong, None, {config.frequency: I_w}, reason))
    return records


def _run_batch(args):
    config, js = args
    if config.mode == "ideal-operator":
        return _run_operator_batch(config, js)
    return _run_dynamic_batch(config, js)


def run_single_experiment(config: ExperimentConfig, j: int) -> ExperimentRecord:
    """One experiment, identical to entry ``j`` of :func:`run_ensemble` for a batch size of 1."""
    return _run_batch((replace(config, batch_size=1), [j]))[0]


def run_ensemble(config: ExperimentConfig, threads: int = 1,
                 progress: Optional[Callable[[int, int], None]] = None) -> List[ExperimentRecord]:
    """All ``n_experiments`` records, sorted by ``j``.

    Batches are fixed chunks of consecutive ``j``, so results do not depend
    on scheduling or on the number of worker processes.
    """
    problems = config.problems()
    if problems:
        from .errors import ConfigError
        raise ConfigError(problems)
    js = np.arange(config.n_experiments)
    chunks = [(config, list(js[i:i + config.batch_size])) for i in range(0, len(js), config.batch_size)]
    out: List[ExperimentRecord] = []
    if threads > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            for recs in ex.map(_run_batch, chunks):
                out.extend(recs)
                if progress:
                    progress(len(out), len(js))
    else:
        for ch in chunks:
            out.extend(_run_batch(ch))
            if progress:
                progress(len(out), len(js))
    out.sort(key=lambda r: r.j)
    return out


def weak_samples(records: Sequence[ExperimentRecord], frequency: Optional[float] = None,
                 t_m: float = 0.0) -> List[CurrentSample]:
    out = []
    for r in records:
        if r.discard_reason is not None:
            continue
        f = frequency if frequency is not None else next(iter(r.window_currents))
        out.append(CurrentSample(r.window_currents[f], t_m - 1.0 / f, t_m))
    return out


def discard_fraction(records):
    return sum(r.discard_reason is not None for r in records) / max(len(records), 1)


@dataclass
class VelocityField:
    """Binned conditional means; ``mean_p`` in momentum units, ``velocity`` = mean_p / m."""

    edges: np.ndarray
    mean_p: np.ndarray
    stderr_p: np.ndarray
    counts: np.ndarray
    mass: float = M_E
    condition_ratio: Optional[float] = None
    interpretable: bool = True

    @property
    def x(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def velocity(self):
        return self.mean_p / self.mass

    @property
    def stderr(self):
        return self.stderr_p / self.mass

    def occupied(self, min_count=1):
        return self.counts >= min_count

    def to_csv(self, path, config_hash=None):
        with open(path, "w", newline="") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            w = csv.writer(fh)
            w.writerow(["x_s_m", "v_mps", "stderr_mps", "count"])
            for x, v, e, n in zip(self.x, self.velocity, self.stderr, self.counts):
                if n > 0:
                    w.writerow([repr(float(x)), repr(float(v)), repr(float(e)), int(n)])


def conditional_expectation(records: Sequence[ExperimentRecord], edges, mass: float = M_E) -> VelocityField:
    """Per-bin sample mean of ``p_w`` over postselected records with ``x_s`` in the bin.

    Error bars are the standard deviation of the bin's values divided by the
    square root of the bin count. Empty bins carry NaN.
    """
    edges = np.asarray(edges, dtype=float)
    sel = [r for r in records if r.postselected]
    if not sel:
        raise EmptyPostselection("no record has a strong position outcome")
    xs = np.array([r.strong.x_s for r in sel])
    pw = np.array([r.p_w for r in sel])
    idx = np.searchsorted(edges, xs, side="right") - 1
    nb = len(edges) - 1
    counts = np.bincount(idx[(idx >= 0) & (idx < nb)], minlength=nb)
    mean = np.full(nb, np.nan)
    err = np.full(nb, np.nan)
    for b in np.nonzero(counts)[0]:
        v = pw[idx == b]
        mean[b] = v.mean()
        err[b] = v.std() / np.sqrt(v.size)
    return VelocityField(edges, mean, err, counts, mass)


def pointer_sigma_momentum(records, config: ExperimentConfig) -> float:
    """Width (kg m/s) of the pointer noise: pointer spread minus the system's own spread."""
    vals = np.array([r.p_w for r in records if r.discard_reason is None])
    total = np.var(vals)
    ref = reference_evolution(config)
    sys_var = momentum_spectrum(ref.psi0).std() ** 2
    return float(np.sqrt(max(total - sys_var, 0.0)))


def velocity_field(records: Sequence[ExperimentRecord], config: ExperimentConfig,
                   min_ratio: float = 10.0) -> VelocityField:
    """Bohmian velocity estimate per strong tile.

    The weak/strong width condition ``sigma_w sigma_s / hbar`` is evaluated
    from the measured pointer noise and the tile width; below ``min_ratio``
    the field is flagged as not interpretable as a Bohmian velocity.
    """
    vf = conditional_expectation(records, config.geometry.tile_edges(), config.mass)
    sw = pointer_sigma_momentum(records, config)
    ratio = condition_ratio(sw, config.geometry.condition_width()) if sw > 0 else 0.0
    vf.condition_ratio = ratio
    if ratio < min_ratio:
        vf.interpretable = False
        warnings.warn(f"weak/strong condition ratio {ratio:.3g} < {min_ratio:g}; "
                      "the conditional mean is not a Bohmian velocity", RuntimeWarning, stacklevel=2)
    return vf


def bohmian_reference(config: ExperimentConfig, edges=None) -> Tuple[np.ndarray, np.ndarray]:
    """Bin-averaged no-backaction velocity ``int J / int rho`` over each bin at ``t_m``.

    Returns (bin centers, velocity). This is the exact conditional mean of
    the velocity of a ``|psi|^2``-distributed electron given the bin.
    """
    ref = reference_evolution(config)
    psi = ref.wavefield(config.n_steps_m, config.t_m)
    edges = config.geometry.tile_edges() if edges is None else np.asarray(edges)
    x = config.grid.x
    J = current_density(psi)
    rho = psi.density
    v = np.full(len(edges) - 1, np.nan)
    for b in range(len(edges) - 1):
        m = (x >= edges[b]) & (x < edges[b + 1])
        if rho[m].sum() > 0:
            v[b] = J[m].sum() / rho[m].sum()
    return 0.5 * (edges[1:] + edges[:-1]), v


def sign_alternations(field: VelocityField, v0: float, min_count: int = 50):
    """Runs of significant deviations from ``v0`` with alternating sign.

    Bins with at least ``min_count`` entries whose ``|v - v0|`` exceeds one
    standard error are kept in x order; the result is the number of
    same-sign runs (so +, -, + gives 3).
    """
    ok = field.counts >= min_count
    d = field.velocity[ok] - v0
    sig = np.abs(d) > field.stderr[ok]
    signs = np.sign(d[sig])
    if signs.size == 0:
        return 0
    return int(1 + np.count_nonzero(signs[1:] != signs[:-1]))


@dataclass
class TrajectoryBundle:
    js: np.ndarray
    times: np.ndarray
    positions: np.ndarray  # (n_records, n_times), NaN past a trajectory's end

    def at_time(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        col = self.positions[:, k]
        return col[np.isfinite(col)]

    def crossings(self):
        """Number of ordering changes between consecutive samples."""
        n = 0
        P = self.positions
        for k in range(1, P.shape[1]):
            a, b = P[:, k - 1], P[:, k]
            ok = np.isfinite(a) & np.isfinite(b)
            order = np.argsort(a[ok], kind="stable")
            n += int(np.count_nonzero(np.diff(b[ok][order]) < 0))
        return n

    def to_csv(self, path, config_hash=None, stride=1):
        with open(path, "w", newline="") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            w = csv.writer(fh)
            w.writerow(["j", "t_s", "x_m"])
            for j, row in zip(self.js, self.positions):
                for k in range(0, len(self.times), stride):
                    if np.isfinite(row[k]):
                        w.writerow([int(j), repr(float(self.times[k])), repr(float(row[k]))])


def reconstruct_trajectories(records: Sequence[ExperimentRecord]) -> TrajectoryBundle:
    recs = [r for r in records if r.trajectory is not None]
    if not recs:
        raise ValueError("no trajectories in the records")
    longest = max(recs, key=lambda r: len(r.trajectory.times)).trajectory.times
    P = np.full((len(recs), len(longest)), np.nan)
    for i, r in enumerate(recs):
        P[i, :len(r.trajectory.positions)] = r.trajectory.positions
    return TrajectoryBundle(np.array([r.j for r in recs]), np.asarray(longest), P)


def initial_positions(config: ExperimentConfig, js: Sequence[int]) -> np.ndarray:
    """Initial system positions of experiments ``js`` (the first draw of each stream)."""
    ref = reference_evolution(config)
    return np.array([sample_positions(ref.psi0.density, config.grid, 1, _rng(config.seed, j))[0] for j in js])


def free_trajectories(config: ExperimentConfig, n: Optional[int] = None) -> TrajectoryBundle:
    """No-backaction trajectories of experiments ``0..n-1`` up to ``t_end``, without probes.

    Uses the same initial positions as :func:`run_ensemble`; escaped
    trajectories are cut (NaN) from the step they leave the grid.
    """
    n = config.n_experiments if n is None else n
    ref = reference_evolution(config)
    js = np.arange(n)
    X = initial_positions(config, js)
    integ = TrajectoryIntegrator(config.grid, config.mass, ref.carrier_k)
    P = np.full((n, config.n_steps_end + 1), np.nan)
    P[:, 0] = X
    last_v = np.zeros(n)
    flags = np.zeros(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    for k in range(config.n_steps_end):
        X1, last_v, esc = integ.step(ref.rows[k], ref.mids[k], X, config.dt, last_v, flags)
        alive &= ~esc
        X = np.where(alive, X1, X)
        P[alive, k + 1] = X[alive]
    times = config.t0 + config.dt * np.arange(config.n_steps_end + 1)
    return TrajectoryBundle(js, times, P)


def frequency_sweep(config: ExperimentConfig, frequencies: Sequence[float], threads: int = 1,
                    records: Optional[Sequence[ExperimentRecord]] = None):
    """Fitted pointer width per measurement frequency, as (f, sigma_A, sigma_p) rows.

    All frequencies are read from the same runs with windows
    ``[t_m - 1/f, t_m]`` of different length.
    """
    fs = tuple(float(f) for f in frequencies)
    cfg = replace(config, frequency=fs[0], extra_frequencies=fs[1:])
    if records is None:
        records = run_ensemble(cfg, threads)
    rows = []
    for f in fs:
        fit = fit_gaussian_sigma(build_distribution(weak_samples(records, f, cfg.t_m)),
                                 cfg.length, cfg.mass)
        rows.append((f, fit.sigma, fit.sigma_momentum))
    return rows


def distance_sweep(config: ExperimentConfig, distances: Sequence[float], n_seeds: int = 4, threads: int = 1):
    """Mean ``int |psi_full - psi_free|^2 dx`` at ``t_m`` per cable distance (common seeds)."""
    rows = []
    for d in distances:
        cfg = replace(config.with_cable_distance(d), mode="full", n_experiments=n_seeds,
                      batch_size=min(config.batch_size, n_seeds))
        recs = run_ensemble(cfg, threads)
        errs = [r.wave_error for r in recs if r.wave_error is not None]
        rows.append((float(d), float(np.mean(errs))))
    return rows
