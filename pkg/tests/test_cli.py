import json

import numpy as np
import pytest

from pampc import cli
from pampc import sim


BASE_CONFIG = """\
version: 1
scenario:
  kind: hover_regulation
  duration: 1.0
sim:
  preroll: 0.2
output:
  directory: {outdir}
"""

CIRCLE_CONFIG = """\
version: 1
scenario:
  kind: circle
  speed: 2.0
  duration: 2.0
sim:
  preroll: 0.5
output:
  directory: {outdir}
"""


def write_config(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text.format(outdir=tmp_path / "out"))
    return p


class TestConfigLoading:
    def test_valid_config_loads(self, tmp_path):
        cfg = cli.load_config(write_config(tmp_path, BASE_CONFIG))
        assert cfg.scenario.kind == sim.HOVER_REGULATION
        assert cfg.ocp.N == 20

    def test_unknown_key_rejected_with_name(self, tmp_path):
        p = write_config(tmp_path, BASE_CONFIG + "banana: 1\n")
        with pytest.raises(cli.ConfigInvalid, match="banana"):
            cli.load_config(p)

    def test_unknown_nested_key_named_with_path(self, tmp_path):
        p = write_config(tmp_path, BASE_CONFIG + "ocp:\n  horizon: 10\n")
        with pytest.raises(cli.ConfigInvalid, match="ocp.horizon"):
            cli.load_config(p)

    def test_small_horizon_names_n(self, tmp_path):
        p = write_config(tmp_path, BASE_CONFIG + "ocp:\n  N: 1\n")
        with pytest.raises(cli.ConfigInvalid, match="N"):
            cli.load_config(p)

    def test_missing_version_rejected(self, tmp_path):
        p = tmp_path / "v.yaml"
        p.write_text("scenario:\n  kind: circle\n")
        with pytest.raises(cli.ConfigInvalid, match="version"):
            cli.load_config(p)

    def test_overrides_apply(self, tmp_path):
        p = write_config(tmp_path, CIRCLE_CONFIG)
        cfg = cli.load_config(p, ["scenario.speed=3.0", "sim.seed=5"])
        assert cfg.scenario.speed == 3.0
        assert cfg.sim.seed == 5

    def test_override_unknown_key_rejected(self, tmp_path):
        p = write_config(tmp_path, CIRCLE_CONFIG)
        with pytest.raises(cli.ConfigInvalid, match="scenario.velocity"):
            cli.load_config(p, ["scenario.velocity=3.0"])

    def test_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_OUTPUT_ROOT, str(tmp_path / "root"))
        p = tmp_path / "rel.yaml"
        p.write_text("version: 1\nscenario:\n  kind: hover_regulation\noutput:\n  directory: out_rel\n")
        cfg = cli.load_config(p)
        assert cfg.output_dir == tmp_path / "root" / "out_rel"


class TestCsvRoundTrip:
    def test_log_round_trips_exactly(self, tmp_path):
        sc = sim.circle_scenario(speed=1.0, duration=0.5)
        from pampc import ocp

        cfg = ocp.OcpConfig()
        log = sim.run_closed_loop(sc, cfg, sim.SimConfig(preroll=0.2))
        path = tmp_path / "log.csv"
        cli.write_log_csv(log, path)
        back = cli.read_log_csv(path)
        assert len(back) == len(log)
        for a, b in zip(log.records, back.records):
            assert a.t == b.t
            assert np.array_equal(a.x, b.x)
            assert np.array_equal(a.u, b.u)
            if a.z is None:
                assert b.z is None
            else:
                assert np.array_equal(a.z, b.z)
            assert a.depth == b.depth and a.visible == b.visible
            assert a.solve_time_us == b.solve_time_us
            assert a.kkt == b.kkt and a.qp_iters == b.qp_iters and a.status == b.status

    def test_schema_mismatch_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(cli.ConfigInvalid):
            cli.read_log_csv(p)


class TestCmdRun:
    def test_run_writes_outputs(self, tmp_path, capsys):
        p = write_config(tmp_path, BASE_CONFIG)
        assert cli.cmd_run(str(p)) == 0
        out = tmp_path / "out"
        csv_path = out / "run_log.csv"
        json_path = out / "run_metrics.json"
        assert csv_path.exists() and json_path.exists()
        # row count: duration / control_period + 1 records plus header
        assert len(csv_path.read_text().strip().split("\n")) == 1 + 101
        metrics = json.loads(json_path.read_text())
        assert metrics["fov_visible_fraction"] == 1.0

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        p = write_config(tmp_path, BASE_CONFIG + "ocp:\n  N: 1\n")
        assert cli.cmd_run(str(p)) == 2
        assert "N" in capsys.readouterr().err

    def test_metrics_match_recomputation_from_csv(self, tmp_path):
        p = write_config(tmp_path, CIRCLE_CONFIG)
        assert cli.cmd_run(str(p)) == 0
        out = tmp_path / "out"
        log = cli.read_log_csv(out / "run_log.csv")
        cfg = cli.load_config(p)
        metrics = sim.compute_metrics(log, cfg.scenario, cfg.ocp)
        assert cli.metrics_json_text(metrics) == (out / "run_metrics.json").read_text()

    def test_deterministic_reruns_without_timing(self, tmp_path):
        p = write_config(tmp_path, CIRCLE_CONFIG + "  timing_in_csv: false\n")
        assert cli.cmd_run(str(p)) == 0
        first = (tmp_path / "out" / "run_log.csv").read_bytes()
        assert cli.cmd_run(str(p)) == 0
        second = (tmp_path / "out" / "run_log.csv").read_bytes()
        assert first == second

    def test_predicted_trajectories_emitted(self, tmp_path):
        p = write_config(tmp_path, BASE_CONFIG + "  predicted_trajectories: true\n")
        assert cli.cmd_run(str(p)) == 0
        pred = tmp_path / "out" / "run_predicted.csv"
        assert pred.exists()
        lines = pred.read_text().strip().split("\n")
        assert len(lines) == 1 + 101 * 20  # header + N stages per record


class TestCmdSweep:
    def test_speed_sweep(self, tmp_path):
        p = write_config(tmp_path, CIRCLE_CONFIG, name="circle.yaml")
        rc = cli.cmd_sweep(str(p), "scenario.speed", [1.0, 2.0], workers=2)
        assert rc == 0
        out = tmp_path / "out"
        assert (out / "circle_scenario_speed_1.0_log.csv").exists()
        assert (out / "circle_scenario_speed_2.0_log.csv").exists()
        table = out / "circle_sweep_scenario_speed.csv"
        rows = table.read_text().strip().split("\n")
        assert rows[0].startswith("scenario.speed,")
        assert len(rows) == 3

    def test_empty_values_rejected(self, tmp_path, capsys):
        p = write_config(tmp_path, CIRCLE_CONFIG)
        assert cli.cmd_sweep(str(p), "scenario.speed", []) == 2

    def test_failed_value_marks_sweep(self, tmp_path, capsys):
        p = write_config(tmp_path, CIRCLE_CONFIG, name="circle.yaml")
        rc = cli.cmd_sweep(str(p), "scenario.radius", [1.8, -1.0], workers=1)
        assert rc == 1
        # the healthy run still completed
        assert (tmp_path / "out" / "circle_scenario_radius_1.8_log.csv").exists()


class TestMain:
    def test_main_run(self, tmp_path, capsys):
        p = write_config(tmp_path, BASE_CONFIG)
        assert cli.main(["run", str(p)]) == 0
        assert "fov_visible_fraction" in capsys.readouterr().out

    def test_main_run_with_set(self, tmp_path):
        p = write_config(tmp_path, BASE_CONFIG)
        assert cli.main(["run", str(p), "--set", "scenario.duration=0.5"]) == 0
        csv_path = tmp_path / "out" / "run_log.csv"
        assert len(csv_path.read_text().strip().split("\n")) == 1 + 51
