import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from weakvalues.constants import K_B, M_E
from weakvalues.electrostatics import Box, DeviceGeometry, default_cable_boxes
from weakvalues.probes import (
    CableRegion,
    ProbeGas,
    ProbeState,
    ThermostatParams,
    init_probe,
    probe_current_contribution,
    step_probe,
)

L = 280e-9
GEO = DeviceGeometry.build()


def regions(distance=10e-9, n=100):
    return [CableRegion(b, n, 300.0, distance) for b in default_cable_boxes(L, distance)]


class TestInitProbe:
    def test_rms_speed(self):
        box = Box((0, 0, 0), (40e-9, 20e-9, 20e-9))
        state = init_probe(CableRegion(box, 20000), np.random.default_rng(0))
        rms = np.sqrt(np.mean(np.sum(state.velocities**2, axis=1)))
        assert_allclose(np.sqrt(3 * K_B * 300 / M_E), 1.168e5, rtol=1e-3)
        assert_allclose(rms, np.sqrt(3 * K_B * 300 / M_E), rtol=0.01)

    def test_mean_velocity_is_zero(self):
        box = Box((0, 0, 0), (40e-9, 20e-9, 20e-9))
        v = init_probe(CableRegion(box, 5000), np.random.default_rng(1)).velocities
        stderr = v.std(axis=0) / np.sqrt(len(v))
        assert np.all(np.abs(v.mean(axis=0)) < 3 * stderr)

    def test_positions_inside_box(self):
        box = Box((-50e-9, -10e-9, -10e-9), (-10e-9, 10e-9, 10e-9))
        state = init_probe(CableRegion(box, 1000), np.random.default_rng(2))
        assert np.all(box.contains(state.positions))

    def test_deterministic(self):
        r = regions()[0]
        a = init_probe(r, np.random.default_rng(9))
        b = init_probe(r, np.random.default_rng(9))
        assert_array_equal(a.positions, b.positions)
        assert_array_equal(a.velocities, b.velocities)

    def test_zero_volume_rejected(self):
        with pytest.raises(ValueError):
            Box((0, 0, 0), (1e-9, 0, 1e-9))


class TestStepProbe:
    def test_free_flight_without_bath(self):
        box = Box((0, 0, 0), (1e-3, 1e-3, 1e-3))
        gas = ProbeGas([CableRegion(box, 2)], ThermostatParams(friction=0.0))
        # cancel the neutralizing background so only the (negligible) pair force remains
        gas._tables = [(lo, ih, 0 * t) for lo, ih, t in gas._tables]
        state = ProbeState(np.array([[1e-4, 5e-4, 5e-4], [9e-4, 5e-4, 5e-4]]),
                           np.array([[1e3, 0, 0], [-2e3, 0, 0]]))
        p0 = state.velocities.sum(axis=0).copy()
        x0 = state.positions.copy()
        rng = np.random.default_rng(0)
        for _ in range(100):
            gas.step(state, None, 1e-15, rng)
        assert_allclose(state.velocities.sum(axis=0), p0, atol=1e-9)
        assert_allclose(state.positions, x0 + 100e-15 * np.array([[1e3, 0, 0], [-2e3, 0, 0]]), rtol=1e-9)

    def test_equipartition(self):
        gas = ProbeGas(regions())
        rng = np.random.default_rng(4)
        state = gas.initial_state(rng)
        for _ in range(300):
            gas.step(state, None, 1e-15, rng)
        ke = []
        for _ in range(2000):
            gas.step(state, None, 1e-15, rng)
            ke.append(state.kinetic_energy().mean())
        assert_allclose(np.mean(ke), 1.5 * K_B * 300, rtol=0.05)

    def test_like_charges_repel(self):
        th = ThermostatParams(friction=0.0)
        regs = regions()
        gas = ProbeGas(regs, th)
        rng = np.random.default_rng(5)
        start = gas.initial_state(rng)
        start.velocities[:] = 0.0
        right = gas.slices[1]
        drift = []
        for X in (None, L):
            s = start.copy()
            for _ in range(50):
                gas.step(s, X, 1e-15, rng)
            drift.append(s.positions[right, 0] - start.positions[right, 0])
        near = np.argsort(start.positions[right, 0])[:10]
        assert np.mean(drift[1][near] - drift[0][near]) > 0

    def test_walls_confine(self):
        gas = ProbeGas(regions())
        rng = np.random.default_rng(6)
        state = gas.initial_state(rng)
        for _ in range(200):
            gas.step(state, 150e-9, 1e-15, rng)
        for s, r in zip(gas.slices, gas.regions):
            assert np.all(r.box.contains(state.positions[s]))

    def test_step_probe_requires_positive_dt(self):
        r = regions()
        state = init_probe(r[0], np.random.default_rng(0))
        with pytest.raises(ValueError):
            step_probe(state, None, r[:1], ThermostatParams(), 0.0, np.random.default_rng(0))

    def test_bit_identical_evolution(self):
        gas = ProbeGas(regions())
        out = []
        for _ in range(2):
            rng = np.random.default_rng(11)
            state = gas.initial_state(rng)
            for _ in range(20):
                gas.step(state, 100e-9, 1e-15, rng)
            out.append(state.positions.tobytes() + state.velocities.tobytes())
        assert out[0] == out[1]


class TestProbeCurrent:
    def test_zero_velocities(self):
        state = init_probe(regions()[1], np.random.default_rng(0))
        state.velocities[:] = 0.0
        assert probe_current_contribution(state, GEO.weak_surface) == 0.0

    def snapshots(self, distance, n=1000):
        rng = np.random.default_rng(12)
        region = regions(distance)[1]
        return np.array([probe_current_contribution(init_probe(region, rng), GEO.weak_surface)
                         for _ in range(n)])

    def test_zero_mean_noise(self):
        I = self.snapshots(10e-9)
        assert abs(I.mean()) < 3 * I.std() / np.sqrt(len(I))

    def test_noise_grows_as_cable_approaches(self):
        # the right cable sits behind the weak plane, so nearer electrons see a steeper flux
        rms = [np.sqrt(np.mean(self.snapshots(d, 400) ** 2)) for d in (40e-9, 10e-9, 5e-9)]
        assert rms[0] < rms[1] < rms[2]
