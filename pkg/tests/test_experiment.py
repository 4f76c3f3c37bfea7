from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from weakvalues.constants import HBAR, M_E, Q_E
from weakvalues.errors import ConfigError, EmptyPostselection
from weakvalues.experiment import (
    ExperimentConfig,
    ExperimentRecord,
    TrajectoryBundle,
    bohmian_reference,
    conditional_expectation,
    estimated_pointer_sigma,
    free_trajectories,
    frequency_sweep,
    initial_positions,
    reconstruct_trajectories,
    reference_evolution,
    run_ensemble,
    run_single_experiment,
    sign_alternations,
    single_packet_specs,
    velocity_field,
)
from weakvalues.measurement import StrongOutcome, detect_strong_position
from weakvalues.oracle import ClosedFormPacket, free_gaussian_velocity, operator_weak_value

SMALL = ExperimentConfig(n_experiments=4, batch_size=4)


@pytest.fixture(scope="module")
def full_records():
    return run_ensemble(SMALL)


@pytest.fixture(scope="module")
def mean_field_records():
    return run_ensemble(replace(SMALL, mode="mean-field"))


def synthetic(xs, pws, mass=M_E):
    out = []
    for j, (x, p) in enumerate(zip(xs, pws)):
        strong = None if x is None else StrongOutcome(0, x, 0.3e-12)
        out.append(ExperimentRecord(j, p * Q_E / (mass * 280e-9), p, strong, None))
    return out


class TestConfig:
    def test_defaults_are_valid(self):
        cfg = ExperimentConfig()
        assert cfg.problems() == []
        assert cfg.n_steps_m == 300 and cfg.n_steps_end == 500

    def test_time_order(self):
        assert any("t0 < t_m < t_end" in p for p in replace(SMALL, t_end=0.2e-12).problems())

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            run_ensemble(replace(SMALL, mode="magic"))

    def test_window_before_start(self):
        assert replace(SMALL, frequency=1e12).problems()

    def test_cable_distance(self):
        cfg = SMALL.with_cable_distance(40e-9)
        left, right = cfg.geometry.cables
        assert_allclose([left.hi[0], right.lo[0]], [-40e-9, 320e-9])


class TestRunEnsemble:
    def test_determinism(self, full_records):
        again = run_ensemble(SMALL)
        for a, b in zip(full_records, again):
            assert a.p_w == b.p_w
            assert a.trajectory.positions.tobytes() == b.trajectory.positions.tobytes()

    def test_single_record_matches_ensemble_entry(self, full_records):
        rec = run_single_experiment(SMALL, 2)
        assert rec.j == 2
        assert_allclose(rec.p_w, full_records[2].p_w, rtol=1e-9)
        assert_allclose(rec.trajectory.positions, full_records[2].trajectory.positions, rtol=1e-12)

    def test_momentum_conversion(self, full_records):
        for r in full_records:
            assert_allclose(r.p_w, r.weak_current * M_E * 280e-9 / Q_E, rtol=1e-12)

    def test_strong_outcome_matches_detector(self, full_records):
        for r in full_records:
            out = detect_strong_position(r.trajectory, SMALL.geometry, SMALL.t_m)
            assert r.strong == out

    def test_initial_positions_are_shared_by_modes(self, full_records, mean_field_records):
        X0 = initial_positions(SMALL, range(4))
        assert_array_equal([r.trajectory.positions[0] for r in full_records], X0)
        assert_array_equal([r.trajectory.positions[0] for r in mean_field_records], X0)

    def test_mean_field_equals_no_probe_run(self, mean_field_records):
        bundle = free_trajectories(SMALL, 4)
        for i, r in enumerate(mean_field_records):
            n = len(r.trajectory.positions)
            assert_allclose(r.trajectory.positions, bundle.positions[i, :n], rtol=1e-13)

    def test_backaction_perturbs_the_state(self, full_records, mean_field_records):
        assert all(r.wave_error > 0 for r in full_records)
        assert all(r.wave_error is None for r in mean_field_records)

    def test_window_currents_for_extra_frequencies(self):
        cfg = replace(SMALL, n_experiments=2, batch_size=2, mode="mean-field", extra_frequencies=(500e12,))
        recs = run_ensemble(cfg)
        assert set(recs[0].window_currents) == {50e12, 500e12}
        assert recs[0].weak_current == recs[0].window_currents[50e12]


OPERATOR = replace(ExperimentConfig(), mode="ideal-operator", n_experiments=4000, batch_size=500)


@pytest.fixture(scope="module")
def operator_records():
    return run_ensemble(OPERATOR)


class TestIdealOperator:
    cfg = OPERATOR

    @pytest.fixture
    def records(self, operator_records):
        return operator_records

    def test_records_have_no_trajectory(self, records):
        assert all(r.trajectory is None for r in records)
        assert sum(r.postselected for r in records) > 0.9 * len(records)

    def test_weak_mean_is_mean_momentum(self, records):
        ref = reference_evolution(self.cfg)
        from weakvalues.quantum import momentum_spectrum
        p = np.array([r.p_w for r in records])
        assert abs(p.mean() - momentum_spectrum(ref.psi0).mean()) < 3 * p.std() / np.sqrt(p.size)

    def test_conditional_mean_matches_quadrature(self, records):
        # conditional mean in the most populated tile against the double momentum integral
        vf = conditional_expectation(records, self.cfg.geometry.tile_edges())
        b = int(np.argmax(vf.counts))
        sigma_k = np.sqrt(2) * estimated_pointer_sigma(self.cfg) * M_E * 280e-9 / Q_E
        ref = reference_evolution(self.cfg)
        psi_m = ref.wavefield(self.cfg.n_steps_m, self.cfg.t_m)
        xs = np.linspace(vf.edges[b], vf.edges[b + 1], 11)
        res = operator_weak_value(psi_m, 0.0, sigma_k, self.cfg.geometry.condition_width(), xs)
        P = np.array([r.probability for r in res])
        N = np.array([r.probability * r.expectation for r in res])
        expected = np.trapezoid(N, xs) / np.trapezoid(P, xs)
        assert abs(vf.mean_p[b] - expected) < 3 * vf.stderr_p[b]

    def test_kraus_width_override(self):
        cfg = replace(self.cfg, n_experiments=2000, kraus_width=1e-25)
        p = np.array([r.p_w for r in run_ensemble(cfg)])
        # system spread plus pointer noise of variance sigma_K^2 / 2
        expected = np.sqrt((HBAR / (np.sqrt(2) * 3e-9)) ** 2 + 0.5e-50)
        assert_allclose(p.std(), expected, rtol=0.05)


class TestConditionalExpectation:
    edges = np.linspace(0, 280e-9, 57)

    def test_constant_momentum(self):
        rng = np.random.default_rng(0)
        xs = rng.uniform(100e-9, 200e-9, 500)
        vf = conditional_expectation(synthetic(xs, [1e-25] * 500), self.edges)
        occ = vf.counts > 0
        assert_allclose(vf.mean_p[occ], 1e-25)
        assert_allclose(vf.stderr_p[occ], 0.0, atol=1e-40)
        assert np.all(np.isnan(vf.mean_p[~occ]))

    def test_linear_profile(self):
        rng = np.random.default_rng(1)
        centers = 0.5 * (self.edges[1:] + self.edges[:-1])
        xs = rng.choice(centers[10:40], 20000)
        a = 1e-18
        pw = a * xs + rng.normal(0, 1e-25, xs.size)
        vf = conditional_expectation(synthetic(xs, pw), self.edges)
        occ = vf.counts > 0
        coef, cov = np.polyfit(vf.x[occ], vf.mean_p[occ], 1, w=1 / vf.stderr_p[occ], cov="unscaled")
        assert abs(coef[0] - a) < 3 * np.sqrt(cov[0, 0])

    def test_stderr_uses_population_std(self):
        vf = conditional_expectation(synthetic([1e-9, 1e-9], [1.0, 3.0]), self.edges)
        assert_allclose(vf.stderr_p[0], 1.0 / np.sqrt(2))

    def test_unpostselected_records_ignored(self):
        vf = conditional_expectation(synthetic([1e-9, None], [1.0, 5.0]), self.edges)
        assert vf.counts.sum() == 1

    def test_empty(self):
        with pytest.raises(EmptyPostselection):
            conditional_expectation(synthetic([None], [1.0]), self.edges)


class TestVelocityField:
    def test_flagged_when_condition_fails(self):
        rng = np.random.default_rng(2)
        xs = rng.uniform(100e-9, 200e-9, 200)
        pw = M_E * 1.784e5 + rng.normal(0, 1e-26, 200)
        with pytest.warns(RuntimeWarning):
            vf = velocity_field(synthetic(xs, pw), SMALL)
        assert not vf.interpretable
        assert vf.condition_ratio < 10

    def test_csv_lists_occupied_bins(self, tmp_path):
        vf = conditional_expectation(synthetic([1e-9, 50e-9], [1.0, 2.0]), np.linspace(0, 280e-9, 57))
        vf.to_csv(tmp_path / "v.csv", "abc")
        lines = (tmp_path / "v.csv").read_text().splitlines()
        assert lines[0] == "# config_hash=abc"
        assert lines[1] == "x_s_m,v_mps,stderr_mps,count"
        assert len(lines) == 4

    def test_sign_alternations(self):
        edges = np.linspace(0, 6, 7)
        vf = conditional_expectation(synthetic(np.repeat(np.arange(6) + 0.5, 60),
                                               np.repeat([2, 2, 0, 2, 0, 1], 60) + np.tile(np.linspace(-.1, .1, 60), 6)),
                                     edges, mass=1.0)
        assert sign_alternations(vf, 1.0) == 4
        assert sign_alternations(vf, 1.0, min_count=61) == 0


class TestBohmianReference:
    def test_single_packet_against_closed_form(self):
        cfg = replace(SMALL, packets=single_packet_specs())
        x, v = bohmian_reference(cfg)
        pk = ClosedFormPacket.from_spec(cfg.packets[0])
        # the free-Gaussian velocity is linear in x, so the density-weighted bin mean
        # equals its value at the bin's density centroid
        psi = reference_evolution(cfg).wavefield(cfg.n_steps_m, cfg.t_m)
        edges = cfg.geometry.tile_edges()
        g = cfg.grid
        for b in np.nonzero(np.isfinite(v))[0]:
            m = (g.x >= edges[b]) & (g.x < edges[b + 1])
            rho = psi.density[m]
            if rho.sum() * g.dx < 1e-6:
                continue
            xc = np.sum(g.x[m] * rho) / rho.sum()
            assert_allclose(v[b], free_gaussian_velocity(pk, xc, cfg.t_m), rtol=1e-6)

    def test_two_packet_profile_oscillates(self):
        x, v = bohmian_reference(SMALL)
        d = v[np.isfinite(v)] - SMALL.central_velocity()
        assert np.count_nonzero(np.diff(np.sign(d)) != 0) >= 2


class TestTrajectories:
    def test_bundle_from_records(self, full_records):
        b = reconstruct_trajectories(full_records)
        assert b.positions.shape[0] == 4
        assert_allclose(b.at_time(0.0), [r.trajectory.positions[0] for r in full_records])

    def test_no_crossings_without_backaction(self):
        assert free_trajectories(SMALL, 400).crossings() == 0

    def test_crossing_detected(self):
        t = np.array([0.0, 1.0])
        b = TrajectoryBundle(np.array([0, 1]), t, np.array([[0.0, 2.0], [1.0, 0.5]]))
        assert b.crossings() == 1

    def test_csv(self, tmp_path, full_records):
        b = reconstruct_trajectories(full_records)
        b.to_csv(tmp_path / "t.csv", "h", stride=100)
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[:2] == ["# config_hash=h", "j,t_s,x_m"]

    def test_no_trajectories(self):
        with pytest.raises(ValueError):
            reconstruct_trajectories(synthetic([1e-9], [1.0]))


class TestSweeps:
    def test_frequency_sweep_rewindows_records(self):
        rng = np.random.default_rng(3)
        recs = []
        for j in range(2000):
            w = {50e12: rng.normal(1e-7, 1e-8), 500e12: rng.normal(1e-7, 3e-8)}
            recs.append(ExperimentRecord(j, w[50e12], 0.0, None, None, w))
        rows = frequency_sweep(SMALL, [500e12, 50e12], records=recs)
        assert rows[0][0] == 500e12 and rows[0][1] > rows[1][1]
        assert_allclose(rows[1][1], 1e-8, rtol=0.05)

    def test_pointer_estimate_shrinks_with_window(self):
        s = [estimated_pointer_sigma(SMALL, f) for f in (500e12, 100e12, 50e12)]
        assert s[0] > s[1] > s[2]
