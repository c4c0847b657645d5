import csv
import io

import pytest

from grovermesh.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, OUT_ENV, main


def test_solve_prints_schedules(capsys):
    assert main(["solve", "--sizes", "4,7", "--variant", "deterministic"]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [int(r["N"]) for r in rows] == [4, 7]
    assert float(rows[1]["success"]) == pytest.approx(1.0, abs=1e-9)
    assert int(rows[1]["iterations"]) in (1, 2)


def test_simulate(capsys):
    code = main(["simulate", "--sizes", "5", "--variant", "original", "--mode", "ideal",
                 "--shots", "exact", "--marked", "2"])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "N=5 marked=2" in out and "success=" in out


def test_simulate_bad_marked(capsys):
    assert main(["simulate", "--sizes", "5", "--marked", "7"]) == EXIT_CONFIG
    assert "marked" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["campaign", "--sizes", "3"],
    ["campaign", "--modes", "16", "--sizes", "4"],
    ["campaign", "--mode", "perfect"],
    ["solve", "--config", "/nonexistent/run.cfg"],
])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_campaign_writes_outputs_and_report(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["campaign", "--sizes", "4", "--mode", "ideal,naive-imperfect",
                 "--shots", "5000", "--out", str(out), "--bloch", "deterministic:4"])
    assert code == EXIT_OK
    assert {p.name for p in out.iterdir()} == {"cells.csv", "summary.json", "bloch.csv"}
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == EXIT_OK
    assert "naive-imperfect" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "nothing.csv")]) == EXIT_CONFIG


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env-out"))
    assert main(["campaign", "--sizes", "4", "--mode", "ideal", "--shots", "exact"]) == EXIT_OK
    assert (tmp_path / "env-out" / "cells.csv").exists()


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("sizes = 4-6\nmode = ideal\nshots = exact\n")
    assert main(["campaign", "--config", str(cfg), "--sizes", "4", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "cells.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 4


def test_partial_failures_exit_3(tmp_path, monkeypatch):
    import grovermesh.campaign as campaign

    def broken(*args):
        raise ValueError("device offline")

    monkeypatch.setattr(campaign, "run_cell", broken)
    code = main(["campaign", "--sizes", "4", "--mode", "ideal", "--out", str(tmp_path)])
    assert code == EXIT_PARTIAL
    assert (tmp_path / "summary.json").exists()


def test_bad_bloch_pair(tmp_path):
    assert main(["campaign", "--sizes", "4", "--mode", "ideal", "--bloch", "x:4",
                 "--out", str(tmp_path)]) == EXIT_CONFIG


def test_calibrate_sequential(tmp_path, capsys):
    code = main(["calibrate", "--strategy", "sequential", "--sizes", "4", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert "TVD" in capsys.readouterr().out
    assert list(tmp_path.glob("sequential_*.csv"))
