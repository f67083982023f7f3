"""CLI behavior: exit codes, artifact paths, report verification."""

import glob
import os
import re
import shutil
import subprocess

import pytest

from pilotedge.cli import main

FAST = ["--messages", "2", "--points", "30", "--repeats", "1"]


def run_cli(*argv) -> int:
    return main(list(argv))


def metrics_csvs(out_dir) -> list:
    return sorted(
        p for p in glob.glob(os.path.join(str(out_dir), "*_r*.csv"))
    )


class TestRun:
    def test_smoke_run_exits_zero(self, tmp_path, capsys):
        code = run_cli("run", *FAST, "--out", str(tmp_path))
        assert code == 0
        out = capsys.readouterr().out
        assert "throughput_mb_s" in out
        assert "summary:" in out
        assert (tmp_path / "baseline_p1_pts30_summary.csv").exists()
        assert len(metrics_csvs(tmp_path)) == 1

    def test_model_flag_overrides_scenario(self, tmp_path):
        code = run_cli(
            "run", *FAST, "--scenario", "baseline", "--model", "kmeans",
            "--points", "40", "--out", str(tmp_path),
        )
        assert code == 0
        assert (tmp_path / "kmeans_p1_pts40_summary.csv").exists()

    def test_unknown_model_is_an_argparse_error(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            run_cli("run", "--scenario", "perceptron", "--out", str(tmp_path))
        assert info.value.code == 2

    def test_zero_points_is_a_config_error(self, tmp_path, capsys):
        code = run_cli("run", "--points", "0", "--out", str(tmp_path))
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_wan_over_inproc_is_a_config_error(self, tmp_path, capsys):
        code = run_cli(
            "run", *FAST, "--transport", "inproc", "--wan-delay-ms", "10",
            "--out", str(tmp_path),
        )
        assert code == 2
        assert "--transport tcp" in capsys.readouterr().err

    def test_wan_flags_imply_tcp_transport(self, tmp_path):
        code = run_cli(
            "run", *FAST, "--wan-delay-ms", "5", "--wan-bw-mbit", "1000",
            "--out", str(tmp_path),
        )
        assert code == 0


class TestSweep:
    def test_explicit_values_write_the_table(self, tmp_path, capsys):
        code = run_cli(
            "sweep", *FAST, "--axis", "message_size", "--values", "25,50",
            "--out", str(tmp_path),
        )
        assert code == 0
        table = (tmp_path / "sweep_message_size.csv").read_text().splitlines()
        assert len(table) == 3
        assert "table:" in capsys.readouterr().out

    def test_model_axis_accepts_names(self, tmp_path):
        code = run_cli(
            "sweep", "--messages", "1", "--points", "40", "--repeats", "1",
            "--axis", "model", "--values", "baseline,kmeans", "--out", str(tmp_path),
        )
        assert code == 0
        assert (tmp_path / "sweep_model.csv").exists()

    def test_non_numeric_size_values_exit_two(self, tmp_path, capsys):
        code = run_cli(
            "sweep", "--axis", "message_size", "--values", "a,b",
            "--out", str(tmp_path),
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err


class TestReport:
    def make_artifacts(self, tmp_path):
        assert run_cli("run", *FAST, "--out", str(tmp_path)) == 0
        (csv_path,) = metrics_csvs(tmp_path)
        return csv_path

    def test_recomputation_matches_stored_summary(self, tmp_path, capsys):
        csv_path = self.make_artifacts(tmp_path)
        long_path = str(tmp_path / "long.csv")
        code = run_cli("report", csv_path, "--out", long_path)
        assert code == 0
        captured = capsys.readouterr()
        assert "MISMATCH" not in captured.err
        lines = open(long_path).read().splitlines()
        assert lines[0] == "job_id,metric,value"
        assert len(lines) == 1 + 8  # one row per reported metric

    def test_tampered_summary_is_flagged(self, tmp_path, capsys):
        csv_path = self.make_artifacts(tmp_path)
        text = open(csv_path).read()
        tampered = re.sub(
            r"throughput_mb_s=([0-9.e+-]+)",
            lambda m: f"throughput_mb_s={float(m.group(1)) * 10}",
            text,
        )
        assert tampered != text
        open(csv_path, "w").write(tampered)
        code = run_cli("report", csv_path, "--out", str(tmp_path / "long.csv"))
        assert code == 1
        err = capsys.readouterr().err
        assert "MISMATCH" in err
        assert "throughput_mb_s" in err

    def test_foreign_header_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("time,value\n1,2\n")
        code = run_cli("report", str(bad), "--out", str(tmp_path / "long.csv"))
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_directory_argument_exits_two_with_hint(self, tmp_path, capsys):
        code = run_cli("report", str(tmp_path), "--out", str(tmp_path / "long.csv"))
        assert code == 2
        err = capsys.readouterr().err
        assert "cannot read" in err and "not a directory" in err

    def test_missing_file_exits_two(self, tmp_path, capsys):
        code = run_cli("report", str(tmp_path / "nope.csv"))
        assert code == 2
        assert "cannot read" in capsys.readouterr().err


class TestEntryPoint:
    def test_installed_script_runs(self, tmp_path):
        script = shutil.which("pilotedge")
        if script is None:
            pytest.skip("console script not on PATH")
        env = dict(os.environ, PILOTEDGE_LOG="ERROR")
        proc = subprocess.run(
            [script, "run", *FAST, "--out", str(tmp_path)],
            capture_output=True,
            text=True,
            env=env,
            timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
