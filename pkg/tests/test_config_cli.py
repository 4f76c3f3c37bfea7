import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from weakvalues.cli import EXIT_CONFIG, EXIT_DISCARD, EXIT_OK, EXIT_PHYSICS, main, oracle_comparison
from weakvalues.config import default_config, load_config, parse_config, parse_text, render_config
from weakvalues.errors import ConfigError, HashMismatch
from weakvalues.results import aggregate_histograms, read_csv, write_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParseConfig:
    def test_paper_defaults(self):
        cfg = parse_config(CONFIGS / "paper_defaults.cfg")
        assert_allclose(cfg.length, 280e-9)
        assert_allclose([p.width for p in cfg.packets], [3e-9, 3e-9])
        assert_allclose(cfg.packets[1].center - cfg.packets[0].center, 50e-9)
        assert_allclose(cfg.packets[0].energy_eV, 0.0905)
        assert_allclose(cfg.t_m, 0.3e-12)
        assert_allclose(cfg.geometry.weak_surface.area, 1e-11)

    def test_units_are_converted(self):
        cf = parse_text("length_um = 0.28\nt_m_fs = 300\nfrequency_Hz = 5e13\n")
        assert_allclose([cf.experiment.length, cf.experiment.t_m, cf.experiment.frequency],
                        [280e-9, 0.3e-12, 50e12])

    def test_missing_thermostat_uses_defaults(self):
        cf = parse_text("experiments = 10\n")
        assert {"temperature", "friction"} <= set(cf.defaults_used)
        assert cf.experiment.thermostat.friction == 5e13

    def test_problems_are_collected(self):
        with pytest.raises(ConfigError) as exc:
            parse_text("colour = red\nlength = 280\nt_m_parsec = 1\nseed = 1.5\nseed = 2\n")
        text = "\n".join(exc.value.problems)
        assert "unknown key 'colour'" in text
        assert "needs a unit suffix" in text
        assert "unit violation" in text
        assert "bad value for 'seed'" in text
        assert "duplicate key 'seed'" in text

    def test_weak_surface_ratio_rule(self):
        with pytest.raises(ConfigError) as exc:
            parse_text("weak_area_m2 = 7.84e-14\n")
        assert any("weak-surface ratio rule" in p for p in exc.value.problems)

    def test_time_ordering(self):
        with pytest.raises(ConfigError):
            parse_text("t_m_ps = 0.6\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")

    def test_render_round_trip(self, tmp_path):
        cf = parse_text("experiments = 12\nseed = 3\n")
        again = load_config(write(tmp_path, render_config(cf)))
        assert again.hash() == cf.hash()
        assert again.experiment == cf.experiment

    def test_hash_depends_on_values(self):
        assert default_config().hash() != default_config().with_overrides(seed=1).hash()
        assert default_config().hash() == default_config().hash()

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            default_config().with_overrides(colour=1)


class TestResults:
    def test_csv_carries_hash(self, tmp_path):
        write_csv(tmp_path / "a.csv", ["x"], [(1.5,)], "abc")
        h, header, rows = read_csv(tmp_path / "a.csv")
        assert (h, header, rows) == ("abc", ["x"], [["1.5"]])

    def test_mixed_hash_aggregation_refused(self, tmp_path):
        cols = ["bin_lo_A", "bin_hi_A", "count", "density_per_A"]
        write_csv(tmp_path / "a.csv", cols, [(0.0, 1.0, 2, 1.0)], "aaa")
        write_csv(tmp_path / "b.csv", cols, [(0.0, 1.0, 3, 1.0)], "bbb")
        write_csv(tmp_path / "c.csv", cols, [(0.0, 1.0, 5, 1.0)], "aaa")
        with pytest.raises(HashMismatch):
            aggregate_histograms([tmp_path / "a.csv", tmp_path / "b.csv"])
        edges, counts = aggregate_histograms([tmp_path / "a.csv", tmp_path / "c.csv"])
        assert list(counts) == [7]


QUICK = "mode = ideal-operator\nexperiments = 300\nseed = 5\n"


class TestCli:
    def run(self, tmp_path, *args):
        return main([*args, "--out-dir", str(tmp_path / "out")])

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = write(tmp_path, "colour = red\n")
        assert self.run(tmp_path, "histogram", "--config", str(cfg)) == EXIT_CONFIG
        assert "unknown key" in capsys.readouterr().err

    def test_histogram_outputs(self, tmp_path):
        cfg = write(tmp_path, QUICK)
        assert self.run(tmp_path, "histogram", "--config", str(cfg)) == EXIT_OK
        out = tmp_path / "out"
        h = load_config(cfg).hash()
        for name in ("histogram.csv", "fit.json", "histogram.svg", "histogram_manifest.json"):
            assert (out / name).is_file()
        assert read_csv(out / "histogram.csv")[0] == h
        assert json.loads((out / "fit.json").read_text())["config_hash"] == h
        assert f"config_hash={h}" in (out / "histogram.svg").read_text()
        manifest = json.loads((out / "histogram_manifest.json").read_text())
        assert manifest["status"] == "complete" and manifest["config_hash"] == h

    def test_rerun_from_manifest_is_byte_identical(self, tmp_path):
        cfg = write(tmp_path, QUICK)
        main(["histogram", "--config", str(cfg), "--seed", "11", "--out-dir", str(tmp_path / "a")])
        man = tmp_path / "a" / "histogram_manifest.json"
        main(["histogram", "--config", str(man), "--out-dir", str(tmp_path / "b")])
        assert (tmp_path / "a" / "histogram.csv").read_bytes() == (tmp_path / "b" / "histogram.csv").read_bytes()

    def test_single_experiment_histogram_warns(self, tmp_path):
        cfg = write(tmp_path, QUICK)
        with pytest.warns(RuntimeWarning):
            code = self.run(tmp_path, "histogram", "--config", str(cfg), "--experiments", "1")
        assert code == EXIT_OK
        assert "fit_rejected" in json.loads((tmp_path / "out" / "fit.json").read_text())

    def test_discard_exit(self, tmp_path):
        cfg = write(tmp_path, QUICK + "kraus_width_kg_m_per_s = 1e-40\n")
        assert self.run(tmp_path, "histogram", "--config", str(cfg)) == EXIT_DISCARD

    def test_velocity_map_operator_mode(self, tmp_path):
        cfg = write(tmp_path, QUICK)
        assert self.run(tmp_path, "velocity-map", "--config", str(cfg)) == EXIT_OK
        h, header, rows = read_csv(tmp_path / "out" / "velocity_ideal-operator.csv")
        assert header == ["x_s_m", "v_mps", "stderr_mps", "count"]
        assert sum(int(r[3]) for r in rows) > 250

    def test_empty_postselection(self, tmp_path, capsys):
        cfg = write(tmp_path, QUICK + "n_tiles = 10\n")
        assert self.run(tmp_path, "velocity-map", "--config", str(cfg)) == EXIT_PHYSICS
        assert "empty postselection" in capsys.readouterr().err

    def test_velocity_map_dynamic_mode(self, tmp_path):
        cfg = write(tmp_path, "mode = mean-field\nexperiments = 4\nbatch_size = 4\ntrajectory_stride = 50\n")
        assert self.run(tmp_path, "velocity-map", "--config", str(cfg)) == EXIT_OK
        out = tmp_path / "out"
        assert (out / "trajectories_mean-field.csv").is_file()
        assert (out / "velocity_reference.csv").is_file()

    def test_validate_default_fails_classicality(self, tmp_path, capsys):
        assert self.run(tmp_path, "validate") == EXIT_PHYSICS
        report = json.loads((tmp_path / "out" / "validate.json").read_text())
        assert report["classicality margin"]["status"] == "fail"
        assert report["surface-role ratios"]["status"] == "pass"
        assert report["condition ratio"]["status"] == "warn"

    def test_frequency_sweep_single_point(self, tmp_path):
        cfg = write(tmp_path, QUICK + "sweep_frequencies_THz = 50\n")
        assert self.run(tmp_path, "sweep", "frequency", "--config", str(cfg)) == EXIT_OK
        assert len(read_csv(tmp_path / "out" / "sweep_frequency.csv")[2]) == 1

    def test_oracle_compare(self, tmp_path):
        assert self.run(tmp_path, "oracle-compare") == EXIT_OK
        data = json.loads((tmp_path / "out" / "oracle_compare.json").read_text())
        assert data["ratios"]["100"]["max_rel_err_velocity"] < 0.01

    def test_oracle_points_avoid_minima(self):
        rows, ep, ev = oracle_comparison(default_config().experiment, 100.0)
        assert rows.shape == (20, 5)
        assert np.all(rows[:, 2] > 0)
