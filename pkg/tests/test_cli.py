"""CLI: configs, reports, determinism, golden regression, exit codes."""

import json

import pytest

from tubelab.cli import (
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    SCENARIOS,
    freeze,
    main,
    regress,
    run_scenario,
)

QUICK_DICHOTOMY = {
    "name": "dich",
    "scenario": "dichotomy",
    "seed": 3,
    "params": {"trials": 25},
}

QUICK_KAKEYA = {
    "name": "kak",
    "scenario": "kakeya",
    "seed": 0,
    "params": {"deltas": [0.0625], "members": ["axes-n2-k2", "bush-n2"]},
}


class TestConfig:
    def test_unknown_scenario(self):
        with pytest.raises(ConfigError):
            ExperimentConfig("x", "nope")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            ExperimentConfig("x", "dichotomy", params={"bogus": 1})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"name": "x", "scenario": "dichotomy", "extra": 1})

    def test_defaults_resolved(self):
        cfg = ExperimentConfig("x", "dichotomy", params={"trials": 5})
        resolved = cfg.resolved_params()
        assert resolved["trials"] == 5
        assert resolved["rhos"] == [0.05, 0.1, 0.3]


class TestReports:
    def test_round_trip_lossless(self):
        cfg = ExperimentConfig.from_dict(QUICK_DICHOTOMY)
        rep = run_scenario(cfg)
        again = ExperimentReport.from_json(rep.to_json())
        assert again.payload == rep.payload
        assert again.wall_clock_s == rep.wall_clock_s

    def test_payload_byte_identical_across_reruns(self):
        cfg = ExperimentConfig.from_dict(QUICK_DICHOTOMY)
        a = run_scenario(cfg)
        b = run_scenario(cfg)
        assert a.payload_json().encode() == b.payload_json().encode()

    def test_seed_changes_values(self):
        a = run_scenario(ExperimentConfig("x", "dichotomy", 1, {"trials": 25}))
        b = run_scenario(ExperimentConfig("x", "dichotomy", 2, {"trials": 25}))
        assert a.payload["constants"] != b.payload["constants"]

    def test_report_carries_version_and_checks(self):
        rep = run_scenario(ExperimentConfig.from_dict(QUICK_KAKEYA))
        assert rep.payload["version"]
        assert rep.payload["checks"]
        assert rep.passed


class TestGolden:
    def test_freeze_then_regress_clean(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TUBELAB_GOLDEN_DIR", str(tmp_path))
        rep = run_scenario(ExperimentConfig.from_dict(QUICK_KAKEYA))
        freeze([rep])
        ok, rows = regress([rep])
        assert ok
        assert all(r["status"] == "ok" for r in rows)
        assert all(abs(r["ratio"] - 1.0) < 1e-12 for r in rows)

    def test_drift_detected(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TUBELAB_GOLDEN_DIR", str(tmp_path))
        rep = run_scenario(ExperimentConfig.from_dict(QUICK_KAKEYA))
        freeze([rep])
        drifted = json.loads(rep.payload_json())
        key = next(iter(drifted["constants"]))
        drifted["constants"][key] *= 3.0
        bad = ExperimentReport(payload=drifted, wall_clock_s=0.0)
        ok, rows = regress([bad])
        assert not ok
        assert any(r["status"] == "drift" and r["constant"] == key for r in rows)

    def test_missing_golden_instructs_freeze(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TUBELAB_GOLDEN_DIR", str(tmp_path / "empty"))
        rep = run_scenario(ExperimentConfig.from_dict(QUICK_KAKEYA))
        with pytest.raises(FileNotFoundError, match="freeze"):
            regress([rep])


class TestMain:
    def _config_file(self, tmp_path, scenarios):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"schema": "tubelab-config-1", "scenarios": scenarios}))
        return path

    def test_run_writes_reports_and_exits_zero(self, tmp_path, capsys):
        cfg = self._config_file(tmp_path, [QUICK_DICHOTOMY])
        code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert code == 0
        report = json.loads((tmp_path / "out" / "dich.json").read_text())
        assert report["payload"]["passed"]

    def test_malformed_config_exits_two(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["run", "--config", str(path)]) == 2
        path.write_text(json.dumps({"schema": "wrong", "scenarios": []}))
        assert main(["run", "--config", str(path)]) == 2
        assert not (tmp_path / "reports").exists()

    def test_byte_identical_rerun_on_disk(self, tmp_path, capsys):
        cfg = self._config_file(tmp_path, [QUICK_DICHOTOMY, QUICK_KAKEYA])
        main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
        for name in ("dich", "kak"):
            pa = json.loads((tmp_path / "a" / f"{name}.json").read_text())["payload"]
            pb = json.loads((tmp_path / "b" / f"{name}.json").read_text())["payload"]
            assert json.dumps(pa, sort_keys=True).encode() == json.dumps(pb, sort_keys=True).encode()

    def test_seed_override(self, tmp_path, capsys):
        cfg = self._config_file(tmp_path, [QUICK_DICHOTOMY])
        main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "9"])
        report = json.loads((tmp_path / "a" / "dich.json").read_text())
        assert report["payload"]["config"]["seed"] == 9

    def test_freeze_and_regress_cli(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("TUBELAB_GOLDEN_DIR", str(tmp_path / "golden"))
        cfg = self._config_file(tmp_path, [QUICK_KAKEYA])
        main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert main(["regress", str(tmp_path / "out")]) == 2  # no golden yet
        assert main(["freeze", str(tmp_path / "out")]) == 0
        assert main(["regress", str(tmp_path / "out")]) == 0
        out = capsys.readouterr().out
        assert "regression: pass" in out

    def test_list_scenarios(self, capsys):
        assert main(["list-scenarios"]) == 0
        out = capsys.readouterr().out
        for name in SCENARIOS:
            assert name in out

    def test_sharpness_csv_export(self, tmp_path, capsys):
        scen = {
            "name": "sharp",
            "scenario": "sharpness",
            "seed": 0,
            "params": {
                "configs": [
                    {"n": 2, "d": 1, "beta": 1.0, "scales": [0.125, 0.0625, 0.03125]}
                ]
            },
        }
        cfg = self._config_file(tmp_path, [scen])
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
        csv = (tmp_path / "out" / "sharp.n2d1.csv").read_text().splitlines()
        assert csv[0] == "scale,value"
        assert len(csv) == 4
        for line in csv[1:]:
            s, v = line.split(",")
            assert float(s) > 0 and float(v) > 0
