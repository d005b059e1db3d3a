import copy
import json
import math
import os

import numpy as np
import pytest

from latticelock import cli
from latticelock.config import ConfigError, default_config, load_config, validate_config
from latticelock.lock import CompositeDrift, LinearRamp
from latticelock.mapping import FitConvergenceError


@pytest.fixture(scope="module")
def base_config():
    return default_config(seed=424242)


@pytest.fixture()
def config_file(tmp_path, base_config):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(base_config))
    return str(path)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestConfigValidation:
    def test_default_config_is_valid(self, base_config):
        validate_config(base_config)

    def test_unknown_key_rejected(self, base_config):
        bad = copy.deepcopy(base_config)
        bad["frobnicate"] = 1
        with pytest.raises(ConfigError):
            validate_config(bad)
        bad2 = copy.deepcopy(base_config)
        bad2["lock"]["unknown_knob"] = 2
        with pytest.raises(ConfigError):
            validate_config(bad2)

    def test_seed_mandatory(self, base_config, tmp_path):
        bad = copy.deepcopy(base_config)
        del bad["seed"]
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(bad))
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_drift_kinds(self, base_config, tmp_path):
        cfg = copy.deepcopy(base_config)
        cfg["drift"] = {"kind": "composite", "parts": [
            {"kind": "linear_ramp", "rate_rad_s": 0.01},
            {"kind": "step", "size_rad": 0.3, "at_s": 10.0},
        ]}
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        loaded = load_config(str(p))
        drift = loaded.drift_process()
        assert isinstance(drift, CompositeDrift)
        assert isinstance(drift.parts[0], LinearRamp)

    def test_typed_accessors(self, config_file):
        cfg = load_config(config_file)
        assert cfg.physical.lamb_dicke == pytest.approx(0.21)
        assert cfg.field.wavevector == pytest.approx(2 * math.pi / 260e-9, rel=1e-9)
        assert cfg.lock_config().duty_cycle == 0.5
        assert cfg.scan_plan().n_windows == 5
        assert cfg.truth_map() is not None


class TestCliContract:
    def test_malformed_config_exits_2_without_files(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"version": 1, "seed": "not-an-int"}')
        out = tmp_path / "out"
        rc = cli.main(["lock", "--config", str(bad), "--out", str(out)])
        assert rc == 2
        assert not out.exists() or not any(out.iterdir())

    def test_missing_config_file_exits_2(self, tmp_path):
        rc = cli.main(["lock", "--config", str(tmp_path / "nope.json"),
                       "--out", str(tmp_path)])
        assert rc == 2

    def test_missing_section_exits_2(self, base_config, tmp_path):
        cfg = copy.deepcopy(base_config)
        del cfg["lock"]
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        rc = cli.main(["lock", "--config", str(p), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_model_error_exits_3(self, base_config, tmp_path):
        cfg = copy.deepcopy(base_config)
        cfg["scan"]["source"] = "model"
        cfg["scan"]["v_max"] = 25.0  # beyond the single-well regime
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        rc = cli.main(["position-scan", "--config", str(p), "--out", str(tmp_path / "o")])
        assert rc == 3

    def test_fit_nonconvergence_exits_4(self, config_file, tmp_path, monkeypatch):
        scan_dir = tmp_path / "scans"
        assert cli.main(["position-scan", "--config", config_file,
                         "--out", str(scan_dir)]) == 0

        def boom(*a, **kw):
            raise FitConvergenceError("no")

        monkeypatch.setattr(cli, "fit_polynomial_map", boom)
        rc = cli.main(["fit-map", "--config", config_file, "--out", str(tmp_path / "o"),
                       str(scan_dir / "position_scan.csv")])
        assert rc == 4


class TestLockCommand:
    def test_outputs_and_reproducibility(self, config_file, tmp_path, base_config):
        cfg = json.loads(read(config_file))
        cfg["lock"]["duration_s"] = 60.0
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert cli.main(["lock", "--config", str(p), "--out", str(out1)]) == 0
        assert cli.main(["lock", "--config", str(p), "--out", str(out2)]) == 0
        csv1 = read(out1 / "lock.csv")
        assert csv1 == read(out2 / "lock.csv")
        assert read(out1 / "lock.summary.json") == read(out2 / "lock.summary.json")
        header = csv1.decode().splitlines()[0]
        assert header == "time_s,true_phase_rad,signal,voltage_V,residual_rad"
        summary = json.loads(read(out1 / "lock.summary.json"))
        assert summary["lock_lost_count"] == 0
        assert 0.0 < summary["residual_rms_rad"] < 0.5

    def test_seed_override_changes_output(self, config_file, tmp_path):
        cfg = json.loads(read(config_file))
        cfg["lock"]["duration_s"] = 30.0
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert cli.main(["lock", "--config", str(p), "--out", str(out1)]) == 0
        assert cli.main(["lock", "--config", str(p), "--out", str(out2),
                         "--seed", "7"]) == 0
        assert read(out1 / "lock.csv") != read(out2 / "lock.csv")


class TestTimeScanCommand:
    def test_three_curves(self, config_file, tmp_path):
        out = tmp_path / "o"
        assert cli.main(["time-scan", "--config", config_file, "--out", str(out)]) == 0
        lines = read(out / "time_scan.csv").decode().splitlines()
        assert lines[0] == "position_rad,time_s,z_m,p_model,p_estimate"
        positions = {ln.split(",")[0] for ln in lines[1:]}
        assert len(positions) == 3
        vals = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
        assert np.all((vals[:, 3] >= 0) & (vals[:, 3] <= 1))
        assert np.all((vals[:, 4] >= 0) & (vals[:, 4] <= 1))

    def test_reproducible(self, config_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert cli.main(["time-scan", "--config", config_file, "--out", str(out1)]) == 0
        assert cli.main(["time-scan", "--config", config_file, "--out", str(out2)]) == 0
        assert read(out1 / "time_scan.csv") == read(out2 / "time_scan.csv")


class TestKickScanCommand:
    def test_output_schema_and_summary(self, base_config, tmp_path):
        cfg = copy.deepcopy(base_config)
        cfg["kick"]["n_delays"] = 12
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        out = tmp_path / "o"
        assert cli.main(["kick-scan", "--config", str(p), "--out", str(out)]) == 0
        lines = read(out / "kick_scan.csv").decode().splitlines()
        assert lines[0] == "delay_ns,spin,alpha_true,p_red,p_blue,alpha_inferred"
        assert len(lines) == 1 + 2 * 12
        summary = json.loads(read(out / "kick-scan.summary.json"))
        assert 0.8 < summary["spin_phase_difference_pi"] < 1.2


class TestPositionScanAndFitMap:
    def test_roundtrip(self, config_file, tmp_path, base_config):
        scans = tmp_path / "scans"
        fit = tmp_path / "fit"
        assert cli.main(["position-scan", "--config", config_file,
                         "--out", str(scans)]) == 0
        lines = read(scans / "position_scan.csv").decode().splitlines()
        assert lines[0] == "voltage_V,signal,n_reps,kind"
        kinds = {ln.split(",")[3] for ln in lines[1:]}
        assert kinds == {"resolved", "aliased"}
        assert cli.main(["fit-map", "--config", config_file, "--out", str(fit),
                         str(scans / "position_scan.csv")]) == 0
        report = json.loads(read(fit / "fit_map.json"))
        truth = base_config["scan"]["map_coefficients"]
        assert report["max_position_error_m"] < 6e-9
        assert not report["ambiguous_branch"]
        for c_fit, c_true in zip(report["coefficients"][2:], truth[2:]):
            assert c_fit == pytest.approx(c_true, rel=0.05)
        assert report["coefficients"][1] == pytest.approx(truth[1], rel=1e-4)
        disc = read(fit / "map_discrepancy.csv").decode().splitlines()
        assert disc[0] == ("voltage_V,map_slope_periods,model_slope_periods,"
                           "relative_deviation")
        # fitted map against the generating electrostatics: small discrepancy
        dev = np.array([abs(float(ln.split(",")[3])) for ln in disc[1:]])
        assert np.max(dev) < 0.03

    def test_fit_map_reproducible(self, config_file, tmp_path):
        scans = tmp_path / "scans"
        assert cli.main(["position-scan", "--config", config_file,
                         "--out", str(scans)]) == 0
        f1, f2 = tmp_path / "f1", tmp_path / "f2"
        for f in (f1, f2):
            assert cli.main(["fit-map", "--config", config_file, "--out", str(f),
                             str(scans / "position_scan.csv")]) == 0
        assert read(f1 / "fit_map.json") == read(f2 / "fit_map.json")


class TestHotIonTimeScan:
    def test_hot_thermal_curves(self, base_config, tmp_path):
        cfg = copy.deepcopy(base_config)
        cfg["echo"]["nbar"] = 28.0
        cfg["echo"]["n_times"] = 60
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        out = tmp_path / "o"
        assert cli.main(["time-scan", "--config", str(p), "--out", str(out)]) == 0
        rows = [ln.split(",") for ln in
                read(out / "time_scan.csv").decode().splitlines()[1:]]
        vals = np.array([[float(x) for x in r] for r in rows])
        anti = vals[np.isclose(vals[:, 0], 0.0)]
        node = vals[np.isclose(vals[:, 0], math.pi / 2)]
        # hot ion: antinode contrast collapses, node curve barely moves
        late = anti[:, 1] > anti[:, 1].max() / 2
        assert np.all(np.abs(anti[late, 3] - 0.5) < 0.1)
        assert np.all(node[:, 3] > 0.9)
