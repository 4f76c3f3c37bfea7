import numpy as np
import pytest
from numpy.testing import assert_allclose

from weakvalues.constants import HBAR, M_E, Q_E
from weakvalues.electrostatics import DeviceGeometry, RectSurface, crossing_pulse, pulse_width
from weakvalues.errors import FitRejected, KernelNotExtractable, ProbabilityUnderflow
from weakvalues.measurement import (
    GaussianKraus,
    PointerDistribution,
    WeakTrace,
    build_distribution,
    current_to_momentum,
    detect_strong_position,
    extract_kernel,
    fit_gaussian_sigma,
    kraus_apply,
    measure_weak_current,
    momentum_to_current,
    povm_completeness_residual,
)
from weakvalues.quantum import (
    BohmianTrajectory,
    GaussianPacketSpec,
    GridSpec,
    MomentumSpectrum,
    build_superposition,
    momentum_spectrum,
)

L = 280e-9
GRID = GridSpec.around(0.0, L, dx=0.4e-9, n_points=2048)
V0 = 1.784e5


def packet_state(center=85e-9):
    return build_superposition([GaussianPacketSpec(center, 3e-9, 0.0905)], GRID)


class TestMeasureWeakCurrent:
    def test_single_electron_uniform_motion(self):
        t = np.arange(0, 301) * 1e-15
        trace = WeakTrace(t, 85e-9 + V0 * t)
        s = measure_weak_current(trace, 0.3e-12, 50e12, L)
        assert_allclose(s.value, Q_E * V0 / L, rtol=1e-10)
        assert_allclose(s.window, 1 / 50e12)

    def test_probe_flux_adds_exact_average(self):
        t = np.arange(0, 301) * 1e-15
        flux = 1e-3 * np.sin(t / 3e-14)
        trace = WeakTrace(t, np.full_like(t, 100e-9), flux)
        s = measure_weak_current(trace, 0.3e-12, 50e12, L, permittivity=2.0)
        assert_allclose(s.value, 2.0 * (flux[300] - flux[280]) / 20e-15, rtol=1e-12)

    def test_window_before_start(self):
        t = np.arange(0, 11) * 1e-15
        with pytest.raises(ValueError):
            measure_weak_current(WeakTrace(t, t), 10e-15, 50e12, L)

    def test_window_shorter_than_step(self):
        t = np.arange(0, 301) * 1e-15
        with pytest.raises(ValueError):
            measure_weak_current(WeakTrace(t, t), 0.3e-12, 2e15, L, dt=1e-15)

    def test_dwell_warning(self):
        t = np.arange(0, 301) * 1e-15
        with pytest.warns(RuntimeWarning):
            measure_weak_current(WeakTrace(t, t), 0.3e-12, 50e12, L, dwell_time=1e-13)

    def test_longer_window_averages_noise(self):
        rng = np.random.default_rng(0)
        t = np.arange(0, 301) * 1e-15
        short, long_ = [], []
        for _ in range(400):
            flux = np.cumsum(rng.standard_normal(t.size)) * 1e-6
            trace = WeakTrace(t, np.zeros_like(t), flux)
            short.append(measure_weak_current(trace, 0.3e-12, 100e12, L).value)
            long_.append(measure_weak_current(trace, 0.3e-12, 25e12, L).value)
        assert np.var(long_) < np.var(short)


class TestPointerDistribution:
    def test_equal_samples_single_bin(self):
        P = build_distribution([1e-7] * 20)
        assert np.count_nonzero(P.counts) == 1
        assert P.total == 20

    def test_counts_and_density(self):
        rng = np.random.default_rng(1)
        P = build_distribution(rng.normal(0, 1, 5000), bins=40)
        assert P.total == 5000
        assert_allclose(np.sum(P.density() * P.widths), 1.0)

    def test_mean_and_stderr(self):
        x = np.random.default_rng(2).normal(3.0, 2.0, 1000)
        P = build_distribution(x)
        assert_allclose(P.mean(), x.mean())
        assert_allclose(P.stderr(), x.std() / np.sqrt(1000))

    def test_merge_is_order_independent(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=100), rng.normal(size=80)
        edges = np.linspace(-5, 5, 21)
        Pa, Pb = build_distribution(a, edges), build_distribution(b, edges)
        m1, m2 = Pa.merge(Pb), Pb.merge(Pa)
        assert_allclose(m1.counts, m2.counts)
        assert_allclose(m1.counts, build_distribution(np.concatenate([a, b]), edges).counts)

    def test_degenerate_edges(self):
        with pytest.raises(ValueError):
            PointerDistribution(np.array([0.0, 0.0]), np.array([1]))

    def test_empty(self):
        with pytest.raises(ValueError):
            build_distribution([])


class TestGaussianFit:
    def test_recovers_sigma(self):
        x = np.random.default_rng(4).normal(1e-7, 4e-8, 10_000)
        fit = fit_gaussian_sigma(build_distribution(x))
        assert_allclose(fit.sigma, 4e-8, rtol=0.02)
        assert_allclose(fit.sigma_momentum, 4e-8 * M_E * L / Q_E, rtol=0.02)

    def test_bimodal_rejected(self):
        rng = np.random.default_rng(5)
        x = np.concatenate([rng.normal(-5, 0.5, 2000), rng.normal(5, 0.5, 2000)])
        with pytest.raises(FitRejected):
            fit_gaussian_sigma(build_distribution(x))

    def test_conversion_round_trip(self):
        assert_allclose(momentum_to_current(current_to_momentum(1.3e-7, L), L), 1.3e-7)
        assert_allclose(current_to_momentum(Q_E / (M_E * L), L), 1.0)


class TestKernel:
    def spectrum(self, sigma_p):
        p = np.linspace(-10, 10, 2001) * sigma_p + M_E * V0
        amp = np.exp(-((p - M_E * V0) ** 2) / (4 * sigma_p**2)).astype(complex)
        amp /= np.sqrt(np.sum(np.abs(amp) ** 2) * (p[1] - p[0]))
        return MomentumSpectrum(p, np.abs(amp) ** 2, amp)

    def test_delta_system_recenters_P(self):
        rng = np.random.default_rng(6)
        I0 = float(momentum_to_current(M_E * V0, L))
        P = build_distribution(rng.normal(I0, 4e-8, 10_000), bins=60)
        g = extract_kernel(P, self.spectrum(1e-30))
        assert_allclose(g.offsets, P.centers - I0, rtol=0, atol=1e-20)
        assert_allclose(g.normalization(), 1.0, rtol=1e-12)

    def test_synthetic_round_trip(self):
        rng = np.random.default_rng(7)
        P = build_distribution(rng.normal(1e-7, 4e-8, 50_000), bins=200)
        g = extract_kernel(P, self.spectrum(1e-30))
        assert_allclose(g.sigma(), 4e-8, rtol=0.01)

    def test_ratio_below_ten(self):
        rng = np.random.default_rng(8)
        sigma_p = float(current_to_momentum(1e-8, L))
        P = build_distribution(rng.normal(1e-7, 4e-8, 1000))
        with pytest.raises(KernelNotExtractable) as exc:
            extract_kernel(P, self.spectrum(sigma_p))
        assert 3 < exc.value.ratio < 5


class TestKraus:
    def test_wide_kraus_is_identity(self):
        psi = packet_state()
        out, prob = kraus_apply(psi, GaussianKraus("position", 85e-9, 1.0, normalization=1.0))
        assert_allclose(prob, 1.0, rtol=1e-12)
        assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-12 * np.abs(psi.amplitudes).max())

    def test_position_kraus_far_away_underflows(self):
        with pytest.raises(ProbabilityUnderflow):
            kraus_apply(packet_state(), GaussianKraus("position", 250e-9, 1e-9))

    def test_output_is_normalized(self):
        out, _ = kraus_apply(packet_state(), GaussianKraus("position", 86e-9, 2e-9))
        assert_allclose(out.norm(), 1.0, rtol=1e-12)

    def test_momentum_kraus_peaks_at_mean_momentum(self):
        psi = packet_state()
        p0 = momentum_spectrum(psi).mean()
        sigma = 0.5 * HBAR / 3e-9
        centers = p0 + np.linspace(-0.3, 0.3, 61) * sigma
        probs = [kraus_apply(psi, GaussianKraus("momentum", c, sigma))[1] for c in centers]
        assert np.argmax(probs) == 30

    def test_probabilities_integrate_to_one(self):
        psi = packet_state()
        sigma = 1e-9
        c = np.linspace(60e-9, 110e-9, 501)
        probs = [kraus_apply(psi, GaussianKraus("position", x, sigma))[1] for x in c]
        assert_allclose(np.trapezoid(probs, c), 1.0, rtol=1e-6)


class TestPovmCompleteness:
    @pytest.mark.parametrize("basis,sigma", [("momentum", 1e-25), ("position", 1e-9)])
    def test_paper_normalization(self, basis, sigma):
        K = GaussianKraus(basis, 0.0, sigma)
        b = np.linspace(-5, 5, 101) * sigma
        c = np.linspace(-20, 20, 4001) * sigma
        assert povm_completeness_residual(K, c, b) < 1e-6

    def test_doubled_normalization(self):
        K = GaussianKraus("position", 0.0, 1e-9)
        K2 = GaussianKraus("position", 0.0, 1e-9, normalization=2 * K.normalization)
        c = np.linspace(-20e-9, 20e-9, 4001)
        assert_allclose(povm_completeness_residual(K2, c, [0.0]), 3.0, rtol=1e-6)

    def test_refinement_converges(self):
        K = GaussianKraus("position", 0.0, 1e-9)
        b = np.linspace(-0.5e-9, 0.5e-9, 11)
        res = []
        for spacing in (1.0, 1.5, 2.0):
            c = np.arange(-20, 20 + 1e-9, spacing) * 1e-9
            res.append(povm_completeness_residual(K, c, b))
        assert res[0] < res[1] < res[2]

    def test_invalid_width(self):
        with pytest.raises(ValueError):
            GaussianKraus("position", 0.0, 0.0)


class TestStrongDetection:
    def trajectory(self, x0, v):
        t = np.arange(0, 501) * 1e-15
        return BohmianTrajectory(t, x0 + v * t, np.full_like(t, v))

    def test_crossing_tile_center(self):
        geo = DeviceGeometry.build()
        # a tile center: 27 * 5 nm + 2.5 nm = 137.5 nm; start just inside it
        out = detect_strong_position(self.trajectory(137.5e-9, V0), geo)
        assert out.index == 27
        assert_allclose(out.x_s, 137.5e-9)
        assert out.time == 0.0

    def test_detection_after_start_time(self):
        geo = DeviceGeometry.build()
        traj = self.trajectory(85e-9, V0)
        out = detect_strong_position(traj, geo, t_start=0.3e-12)
        x = 85e-9 + V0 * 0.3e-12
        assert out.index == geo.tile_index(x)
        assert_allclose(out.x_s, geo.tile_centers()[out.index])

    def test_never_reaching_tiles(self):
        geo = DeviceGeometry.build()
        assert detect_strong_position(self.trajectory(-50e-9, -V0), geo) is None

    def test_pulse_narrows_with_tile_area(self):
        t = np.linspace(0, 1e-12, 40001)
        X = 140e-9 + V0 * (t - 0.5e-12)
        widths = []
        for area in (4e-18, 25e-18, 100e-18):
            s = RectSurface.square((160e-9, 0, 0), area, "x", "strong-small")
            widths.append(pulse_width(t, crossing_pulse(t, X, V0, s)))
        assert widths[0] < widths[1] < widths[2]
