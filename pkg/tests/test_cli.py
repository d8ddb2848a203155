import json

import pytest

from restless_oddarm.cli import main

BASE = {
    "instance": {"K": 3, "S": 2, "P1": [[0.9, 0.1], [0.2, 0.8]], "P2": [[0.5, 0.5], [0.5, 0.5]], "eta": 0.1},
    "solver": {"D": 6, "delta": 0.2, "eta_grid": [0.1, 1.0]},
    "sweep": {"L": [10, 100, 1000], "trials": 6, "master_seed": 1, "drift_horizon": 2000},
}


def write_config(path, **overrides):
    cfg = json.loads(json.dumps(BASE))
    for section, values in overrides.items():
        cfg[section].update(values)
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def cfg(tmp_path):
    return write_config(tmp_path / "run.json")


def test_validate_ok(cfg, capsys):
    assert main(["validate", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "mixing exponent M=1" in out and out.strip().endswith("OK")


def test_validate_row_sum(tmp_path, capsys):
    path = write_config(tmp_path / "bad.json", instance={"P1": [[0.9, 0.09], [0.2, 0.8]]})
    assert main(["validate", "--config", path]) == 1
    assert "FAIL stochasticity" in capsys.readouterr().out


def test_validate_support(tmp_path, capsys):
    path = write_config(tmp_path / "bad.json", instance={"P1": [[1.0, 0.0], [0.2, 0.8]]})
    assert main(["validate", "--config", path]) == 1
    assert "first violated assumption is 'support'" in capsys.readouterr().out


def test_unknown_key(tmp_path, capsys):
    path = write_config(tmp_path / "bad.json", solver={"tolerance": 1})
    assert main(["solve", "--config", path, "--out", str(tmp_path)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_solve_idempotent(cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "VIOLATION" not in text and "R1*" in text
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    summary = json.loads(first["solve_summary.json"])
    assert summary["r_star"]["0"] > 0 and summary["r1_star"] >= summary["r_star"]["0"]
    assert summary["meta"]["config_sha256"]
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_sweep_needs_tables(cfg, tmp_path, capsys):
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "empty")]) == 2
    assert "run 'restless-oddarm solve" in capsys.readouterr().err


def test_sweep_outputs(cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--auto-solve"]) == 0
    text = capsys.readouterr().out
    assert "slope=" in text and "band" in text
    csv_text = (out / "sweep.csv").read_text()
    assert csv_text.startswith("# config_sha256=")
    assert len(csv_text.strip().splitlines()) == 2 + 9
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert set(summary["floor_tau"]) == {"10.0", "100.0", "1000.0"}


def test_seed_override(cfg, tmp_path):
    out = tmp_path / "out"
    main(["solve", "--config", cfg, "--out", str(out)])
    results = []
    for seed in ("1", "1", "2"):
        assert main(["simulate", "--config", cfg, "--out", str(out), "--seed", seed, "--trials", "20"]) == 0
        results.append((out / "simulate_trials.jsonl").read_text())
    assert results[0] == results[1] != results[2]


def test_drift(cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["drift", "--config", cfg, "--out", str(out), "--hypothesis", "1"]) == 0
    rep = json.loads((out / "drift_h1_uniform.json").read_text())
    assert set(rep["predicted"]) == {"0", "2"}
    assert "rel_err" in capsys.readouterr().out
