import numpy as np
import pytest

from ceca.cli import main


def test_consensus_command_writes_csv(tmp_path, capsys):
    out = tmp_path / "res.csv"
    code = main(["consensus", "--n", "34", "--mode", "1p", "--seed", "7",
                 "--out", str(out)])
    assert code == 0
    assert out.exists()
    captured = capsys.readouterr().out
    assert "final residue" in captured and str(out) in captured
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "round,residue,rel_deviation,comm_scalars"
    # converged at tau = 6 for n = 34
    rel = [float(l.split(",")[2]) for l in lines[1:]]
    assert rel[6] <= 1e-10 < rel[5]


def test_matrix_verify_command_passes(capsys):
    code = main(["matrix-verify", "--sizes", "2,3,6"])
    assert code == 0
    out = capsys.readouterr().out
    assert "overall: PASS" in out
    assert "skipped" in out  # n=3 one-port


def test_lsq_command_runs_small(tmp_path, capsys):
    out = tmp_path / "lsq.csv"
    code = main([
        "lsq", "--preset", "desk", "--topology", "ceca-2p", "--seeds", "2",
        "--T", "15", "--out", str(out),
    ])
    assert code == 0
    assert out.exists()
    assert (tmp_path / "lsq_seed0.csv").exists()
    assert (tmp_path / "lsq_seed1.csv").exists()
    assert "mean final residue" in capsys.readouterr().out


def test_invalid_combination_exits_with_config_error(tmp_path, capsys):
    code = main(["lsq", "--topology", "one-peer-exp", "--n", "10", "--T", "5"])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_env_var_sets_default_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("CECA_OUT_DIR", str(tmp_path / "results"))
    code = main(["consensus", "--n", "6", "--out", "res.csv"])
    assert code == 0
    assert (tmp_path / "results" / "res.csv").exists()


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n = 8\nd = 2\nseed = 3\ntopology = ceca\nmode = 2p\n")
    out = tmp_path / "a.csv"
    code = main(["consensus", "--config", str(cfg), "--n", "16",
                 "--out", str(out)])
    assert code == 0
    meta = [l for l in out.read_text().splitlines() if l.startswith("#")]
    # the flag wins over the file for n; the file supplies d and seed
    assert "# n=16" in meta
    assert "# d=2" in meta
    assert "# seed=3" in meta


def test_deterministic_output_bytes(tmp_path):
    paths = []
    for name in ("one.csv", "two.csv"):
        out = tmp_path / name
        assert main(["consensus", "--n", "12", "--seed", "4",
                     "--out", str(out)]) == 0
        paths.append(out.read_bytes())
    assert paths[0] == paths[1]
