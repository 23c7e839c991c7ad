import subprocess
import sys

import pytest

from drlra.cli import main
from drlra.harness import read_csv
from drlra.hybrid import EpsilonStats, stats_to_csv


def run(*argv):
    return main([str(a) for a in argv])


def test_generate_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("generate", "--k", 20, "--t", 1000, "--delta", 0.3, "--seed", 7, "--out", tmp_path / d) == 0
    assert (tmp_path / "a/trace.csv").read_bytes() == (tmp_path / "b/trace.csv").read_bytes()
    run("generate", "--k", 20, "--t", 1000, "--delta", 0.3, "--seed", 8, "--out", tmp_path / "c")
    assert (tmp_path / "c/trace.csv").read_bytes() != (tmp_path / "a/trace.csv").read_bytes()


def test_global_flags_before_command(tmp_path):
    assert run("--seed", 7, "--out", tmp_path / "x", "generate", "--k", 5, "--t", 50) == 0
    assert run("generate", "--k", 5, "--t", 50, "--seed", 7, "--out", tmp_path / "y") == 0
    assert (tmp_path / "x/trace.csv").read_bytes() == (tmp_path / "y/trace.csv").read_bytes()


def test_train_evaluate_pipeline_deterministic(tmp_path):
    for d in ("a", "b"):
        out = tmp_path / d
        assert run("generate", "--k", 8, "--t", 400, "--delta", 0.2, "--out", out) == 0
        assert run("train", "--trace", out / "trace.csv", "--n", 4, "--n1", 2, "--out", out) == 0
        assert run("evaluate", "--checkpoint", out / "agent.qnet", "--t", 200, "--n", 4, "--n1", 2,
                   "--stats-file", "stats.csv", "--slots-file", "slots.csv", "--out", out) == 0
        assert run("analyze", "--stats", out / "stats.csv", "--k", 8, "--n", 4, "--n1", 2, "--out", out) == 0
    for f in ("trace.csv", "agent.qnet", "evaluation.csv", "stats.csv", "slots.csv", "analysis.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    rows = read_csv(tmp_path / "a/evaluation.csv")
    assert len(rows) == 201 and rows[-1]["slot"] == "mean"
    assert float(rows[-1]["hybrid_rate"]) <= float(rows[-1]["genie_rate"]) + 1e-12


def test_experiment_byte_identical(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text("[tiny]\nkind = rate_vs_delta\nk_nodes = 6\nn_total = 3\nt_slots = 200\n"
                   "deltas = 0.2, 0.8\nseeds = 0-1\nagent.hidden = 8\n")
    for d in ("a", "b"):
        assert run("experiment", "--config", cfg, "--out", tmp_path / d) == 0
    for f in ("per_seed.csv", "rate_vs_delta.csv"):
        assert (tmp_path / "a/tiny" / f).read_bytes() == (tmp_path / "b/tiny" / f).read_bytes()


def test_experiment_honours_env_out(tmp_path, monkeypatch):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text("[tiny]\nkind = custom\nk_nodes = 5\nn_total = 3\nt_slots = 100\nagent.hidden = 8\n")
    monkeypatch.setenv("DRLRA_OUT", str(tmp_path / "env"))
    assert run("experiment", "--config", cfg) == 0
    assert (tmp_path / "env/tiny/custom.csv").exists()


def test_analyze_perfect_stats_has_no_ra_term(tmp_path):
    s = [EpsilonStats.from_counts(k, 0, 0) for k in (0, 3, 5, 2)]
    (tmp_path / "s.csv").write_text(stats_to_csv(s))
    assert run("analyze", "--stats", tmp_path / "s.csv", "--k", 10, "--n", 10, "--n1", 5, "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "analysis.csv")
    assert all(float(r["ra_stage_term"]) == 0.0 for r in rows[:-1])
    assert [float(r["hybrid_rate"]) for r in rows[:-1]] == pytest.approx([0, 0.3, 0.5, 0.2])


def test_bad_file_one_line_error(tmp_path, capsys):
    assert run("evaluate", "--checkpoint", tmp_path / "none.qnet", "--out", tmp_path) == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and "none.qnet" in err and err.startswith("drlra evaluate: error:")
    assert run("analyze", "--stats", tmp_path / "missing.csv", "--out", tmp_path) == 1
    assert run("experiment", "--out", tmp_path) == 1
    (tmp_path / "bad.cfg").write_text("[x]\nk_nodes = -1\n")
    assert run("experiment", "--config", tmp_path / "bad.cfg") == 1
    assert "k_nodes" in capsys.readouterr().err


def test_mismatched_trace_rejected(tmp_path, capsys):
    run("generate", "--k", 4, "--t", 30, "--out", tmp_path)
    run("train", "--k", 6, "--t", 30, "--out", tmp_path)
    assert run("evaluate", "--checkpoint", tmp_path / "agent.qnet", "--trace", tmp_path / "trace.csv") == 1
    assert "nodes" in capsys.readouterr().err


def test_unknown_subcommand_prints_usage():
    p = subprocess.run([sys.executable, "-m", "drlra", "frobnicate"], capture_output=True, text=True)
    assert p.returncode == 2
    assert "usage: drlra" in p.stderr
    p = subprocess.run([sys.executable, "-m", "drlra", "generate", "--bogus"], capture_output=True, text=True)
    assert p.returncode == 2 and "usage" in p.stderr
    p = subprocess.run([sys.executable, "-m", "drlra"], capture_output=True, text=True)
    assert p.returncode == 2 and "usage" in p.stderr
