import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from landau.cli import main
from landau.config import (
    BlobSettings,
    ConfigError,
    GaussianInitial,
    SbtmSettings,
    load_preset,
    parse_config,
    preset_names,
    render_config,
    with_overrides,
)
from landau.runner import run_sweep, run_to_files

MINIMAL = """
dimension = 3
particles = 64
t_end = 0.02
dt = 0.01

[initial]
kind = "gaussian"
variances = [1.8, 0.2, 1.0]

[solver]
kind = "blob"
"""


class TestParseConfig:
    def test_minimal_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.gamma == 0.0
        assert cfg.kernel_constant == 1.0
        assert cfg.t_start == 0.0
        assert cfg.snapshot_times == (0.0, 0.02)
        assert isinstance(cfg.solver, BlobSettings)
        assert cfg.solver.bandwidth_mode == "per_step"

    def test_sbtm_defaults(self):
        text = MINIMAL.replace('kind = "blob"', 'kind = "sbtm"')
        cfg = parse_config(text)
        s = cfg.solver
        assert isinstance(s, SbtmSettings)
        assert s.hidden == (100,)
        assert s.learning_rate == pytest.approx(4e-4)
        assert s.steps_per_iteration == 25
        assert s.denoise_alpha == pytest.approx(0.4)
        assert s.train_mode == "fixed"

    def test_bkw_gets_two_hidden_layers_and_t_start(self):
        text = """
dimension = 3
kernel_constant = 0.041666666666666664
particles = 64
t_end = 5.6
dt = 0.01
[initial]
kind = "bkw"
[solver]
kind = "sbtm"
"""
        cfg = parse_config(text)
        assert cfg.t_start == 5.5
        assert cfg.solver.hidden == (100, 100)

    def test_empty_solver_section_rejected(self):
        text = MINIMAL.replace('kind = "blob"\n', "")
        with pytest.raises(ConfigError, match="solver"):
            parse_config(text)

    def test_unknown_key_reports_path_and_line(self):
        text = self.with_top_level("bogus_key = 1")
        with pytest.raises(ConfigError, match=r"^bogus_key \(line \d+\)"):
            parse_config(text)

    def test_unknown_solver_key_reports_section(self):
        text = MINIMAL.replace('kind = "blob"', 'kind = "blob"\nlearning_rate = 0.1')
        with pytest.raises(ConfigError, match="solver.learning_rate"):
            parse_config(text)

    def test_type_mismatch(self):
        with pytest.raises(ConfigError, match="particles"):
            parse_config(MINIMAL.replace("particles = 64", 'particles = "many"'))

    @staticmethod
    def with_top_level(extra):
        return MINIMAL.replace("[initial]", extra + "\n\n[initial]")

    def test_invariant_violations(self):
        with pytest.raises(ConfigError, match="dt"):
            parse_config(MINIMAL.replace("dt = 0.01", "dt = -0.5"))
        with pytest.raises(ConfigError, match="particles"):
            parse_config(MINIMAL.replace("particles = 64", "particles = 1"))
        with pytest.raises(ConfigError, match="t_end"):
            parse_config(MINIMAL.replace("t_end = 0.02", "t_end = -1.0"))

    def test_gamma_range(self):
        with pytest.raises(ConfigError, match="gamma"):
            parse_config(self.with_top_level("gamma = 1.5"))

    def test_whole_number_of_steps_required(self):
        with pytest.raises(ConfigError, match="whole number"):
            parse_config(MINIMAL.replace("t_end = 0.02", "t_end = 0.025"))

    def test_truth_metrics_need_bkw(self):
        text = self.with_top_level('metrics = ["score_err_normalized"]')
        with pytest.raises(ConfigError, match="analytic"):
            parse_config(text)

    def test_unknown_metric(self):
        with pytest.raises(ConfigError, match="unknown metric"):
            parse_config(self.with_top_level('metrics = ["bogus"]'))

    def test_syntax_error_has_line(self):
        with pytest.raises(ConfigError, match="syntax"):
            parse_config("dimension = = 3")

    def test_round_trip(self):
        cfg = parse_config(MINIMAL)
        assert parse_config(render_config(cfg)) == cfg

    def test_round_trip_all_presets(self):
        for name in preset_names():
            cfg = load_preset(name)
            assert parse_config(render_config(cfg)) == cfg


class TestPresets:
    def test_eight_presets_shipped(self):
        names = preset_names()
        assert len(names) == 8
        assert "example1_bkw_sbtm" in names
        assert "example3_coulomb_blob" in names

    def test_example1_fields(self):
        cfg = load_preset("example1_bkw_sbtm")
        assert cfg.dimension == 3
        assert cfg.gamma == 0.0
        assert cfg.kernel_constant == pytest.approx(1.0 / 24.0)
        assert cfg.t_start == 5.5
        assert cfg.dt == 0.01
        assert cfg.t_end == 9.5
        assert cfg.solver.hidden == (100, 100)

    def test_example3_fields(self):
        for name in ("example3_coulomb_blob", "example3_coulomb_sbtm"):
            cfg = load_preset(name)
            assert cfg.gamma == -3.0
            assert cfg.dt == 1.0
            assert cfg.t_end == 300.0
            assert cfg.initial == GaussianInitial(
                mean=(0.0, 0.0, 0.0), variances=(1.8, 0.2, 1.0)
            )

    def test_example2_fields(self):
        cfg = load_preset("example2_aniso3_sbtm")
        assert cfg.t_end == 4.0
        assert cfg.solver.hidden == (100,)
        cfg10 = load_preset("example2_aniso10_blob")
        assert cfg10.dimension == 10
        assert cfg10.initial.variances[:2] == (1.8, 0.2)
        assert sum(cfg10.initial.variances) == pytest.approx(10.0)


def small_cfg(**overrides):
    cfg = parse_config(MINIMAL)
    return with_overrides(cfg, **overrides) if overrides else cfg


class TestRunOutputs:
    def test_files_and_row_count(self, tmp_path):
        cfg = small_cfg(t_end=0.05)
        summary = run_to_files(cfg, tmp_path)
        lines = (tmp_path / "metrics.csv").read_text().strip().split("\n")
        assert lines[0] == "time," + ",".join(cfg.metrics)
        assert len(lines) == 1 + 6  # header + n_steps+1 rows
        assert (tmp_path / "summary.json").exists()
        assert (tmp_path / "particles_0.csv").exists()
        assert (tmp_path / "particles_0.05.csv").exists()
        assert summary["momentum_drift_final"] < 1e-12

    def test_snapshot_contents(self, tmp_path):
        cfg = small_cfg()
        run_to_files(cfg, tmp_path)
        snap = (tmp_path / "particles_0.csv").read_text().strip().split("\n")
        assert snap[0] == "x0,x1,x2"
        assert len(snap) == 1 + cfg.particles

    def test_determinism_byte_identical(self, tmp_path):
        cfg = small_cfg(t_end=0.03)
        run_to_files(cfg, tmp_path / "a")
        run_to_files(cfg, tmp_path / "b")
        assert (tmp_path / "a/metrics.csv").read_bytes() == (
            tmp_path / "b/metrics.csv"
        ).read_bytes()

    def test_seed_changes_output(self, tmp_path):
        run_to_files(small_cfg(), tmp_path / "a")
        run_to_files(small_cfg(seed=99), tmp_path / "b")
        assert (tmp_path / "a/metrics.csv").read_bytes() != (
            tmp_path / "b/metrics.csv"
        ).read_bytes()

    def test_summary_fields(self, tmp_path):
        run_to_files(small_cfg(), tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text())
        for key in ("backend", "phase_seconds", "entropy_total",
                    "moments_initial", "moments_final", "seed", "threads"):
            assert key in summary
        assert summary["entropy_total"] <= 0.0


class TestSweep:
    def test_rows_and_columns(self, tmp_path):
        cfg = small_cfg()
        path = run_sweep(cfg, [64, 128], ["blob", "sbtm"], 2, tmp_path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 1 + 2 * 2 * 2
        header = lines[0].split(",")
        assert header[:4] == ["solver", "n", "seed", "status"]
        assert "final_cov11" in header
        statuses = [line.split(",")[3] for line in lines[1:]]
        assert all(s == "ok" for s in statuses)

    def test_partial_failure_flagged(self, tmp_path):
        cfg = small_cfg()
        # n=2 gives a singular sample covariance: blob bandwidth fails
        path = run_sweep(cfg, [2, 64], ["blob"], 1, tmp_path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 3
        assert "failed" in lines[1]
        assert lines[2].split(",")[3] == "ok"


class TestCli:
    def write_cfg(self, tmp_path):
        p = tmp_path / "exp.toml"
        p.write_text(MINIMAL)
        return p

    def test_run_exit_zero(self, tmp_path, capsys):
        cfg = self.write_cfg(tmp_path)
        code = main(["run", str(cfg), "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out/metrics.csv").exists()
        assert "momentum drift" in capsys.readouterr().out

    def test_run_seed_override(self, tmp_path):
        cfg = self.write_cfg(tmp_path)
        main(["run", str(cfg), "--seed", "7", "--out", str(tmp_path / "o")])
        summary = json.loads((tmp_path / "o/summary.json").read_text())
        assert summary["seed"] == 7

    def test_config_error_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text(MINIMAL.replace("dt = 0.01", "dt = -1.0"))
        assert main(["run", str(bad)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_missing_config_exit_one(self, capsys):
        assert main(["run", "no_such_config"]) == 1

    def test_training_nonconvergence_exit_three(self, tmp_path, capsys):
        # a width-1 net cannot represent the anisotropic score to 1e-10
        text = MINIMAL.replace(
            'kind = "blob"',
            'kind = "sbtm"\nhidden = [1]\ninit_threshold = 1e-10',
        )
        p = tmp_path / "bad_train.toml"
        p.write_text(text)
        assert main(["run", str(p), "--out", str(tmp_path / "o3")]) == 3
        assert "converge" in capsys.readouterr().err

    def test_presets_list_and_show(self, capsys):
        assert main(["presets", "list"]) == 0
        out = capsys.readouterr().out
        assert "example1_bkw_blob" in out
        assert main(["presets", "show", "example3_coulomb_sbtm"]) == 0
        shown = capsys.readouterr().out
        assert "gamma = -3.0" in shown

    def test_presets_show_unknown(self, capsys):
        assert main(["presets", "show", "nope"]) == 1

    def test_sweep_cli(self, tmp_path):
        cfg = self.write_cfg(tmp_path)
        code = main([
            "sweep", str(cfg), "--n", "64", "--solvers", "blob",
            "--seeds", "1", "--out", str(tmp_path / "sw"),
        ])
        assert code == 0
        assert (tmp_path / "sw/sweep.csv").exists()

    def test_module_entry_point(self, tmp_path):
        cfg = self.write_cfg(tmp_path)
        proc = subprocess.run(
            [sys.executable, "-m", "landau", "run", str(cfg),
             "--out", str(tmp_path / "m")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "m/metrics.csv").exists()
