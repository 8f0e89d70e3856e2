"""Command-line interface: happy paths, precedence rules, exit codes."""

import json

import numpy as np
import pytest
import yaml

from respfit.cli import main

LM_SIM = {
    "model": "langevin_morse",
    "scheme": "langevin_splitting",
    "dt": 2e-3,
    "lag": 2e-3,
    "n_samples": 2000,
    "burn_in": 1.0,
    "seed": 7,
    "true_theta": {"gamma": 0.5, "kBT": 1.0, "eps": 0.2, "a": 10.0, "x0": 0.0},
}

TW_ESTIMATE = {
    "pipeline": "triplewell_response",
    "model": "triple_well",
    "scheme": "weak_trapezoidal",
    "dt": 1e-3,
    "lag": 1e-3,
    "n_samples": 30_000,
    "node_n_samples": 20_000,
    "burn_in": 5.0,
    "seed": 1,
    "true_theta": {"d": 0.5, "a": 1.0, "kBT": 1.5, "gamma": 0.25},
    "lag_grid": {"start": 0.1, "step": 0.1, "count": 5},
    "max_order": 2,
    "chebyshev_order": 3,
    "solver": {"n_starts": 8, "seed": 0},
}


def _write(tmp_path, doc, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_writes_trajectory(tmp_path, capsys):
    cfg = _write(tmp_path, LM_SIM)
    out = tmp_path / "run"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "data.traj").exists()
    assert (out / "data.traj.meta.json").exists()
    assert "wrote" in capsys.readouterr().out


def test_simulate_deterministic_bytes(tmp_path):
    cfg = _write(tmp_path, LM_SIM)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "data.traj").read_bytes() == (b / "data.traj").read_bytes()
    assert (a / "data.traj.meta.json").read_bytes() == \
        (b / "data.traj.meta.json").read_bytes()


def test_simulate_seed_override_changes_output(tmp_path):
    cfg = _write(tmp_path, LM_SIM)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b),
                 "--seed", "8"]) == 0
    assert (a / "data.traj").read_bytes() != (b / "data.traj").read_bytes()


def test_simulate_dry_run_writes_nothing(tmp_path, capsys):
    cfg = _write(tmp_path, LM_SIM)
    out = tmp_path / "run"
    assert main(["simulate", "--config", cfg, "--out", str(out),
                 "--dry-run"]) == 0
    assert not out.exists()
    assert capsys.readouterr().out.startswith("plan:")


def test_simulate_resume_skips(tmp_path, capsys):
    cfg = _write(tmp_path, LM_SIM)
    out = tmp_path / "run"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    before = (out / "data.traj").read_bytes()
    capsys.readouterr()
    assert main(["simulate", "--config", cfg, "--out", str(out),
                 "--resume"]) == 0
    assert "resume" in capsys.readouterr().out
    assert (out / "data.traj").read_bytes() == before


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def test_stats_from_stored_trajectory(tmp_path):
    sim_cfg = _write(tmp_path, dict(LM_SIM, n_samples=20_000), "sim.yaml")
    out = tmp_path / "run"
    assert main(["simulate", "--config", sim_cfg, "--out", str(out)]) == 0
    stats_doc = {
        "trajectory": str(out / "data.traj"),
        "lag_grid": {"start": 0.1, "step": 0.1, "count": 4},
        "observable": {"a": 1, "b": 1},
    }
    stats_cfg = _write(tmp_path, stats_doc, "stats.yaml")
    assert main(["stats", "--config", stats_cfg, "--out", str(out)]) == 0
    lines = (out / "statistics.csv").read_text().strip().splitlines()
    assert len(lines) == 5


def test_stats_corrupt_trajectory_exit_2(tmp_path):
    bad = tmp_path / "bad.traj"
    bad.write_bytes(b"garbage" * 20)
    cfg = _write(tmp_path, {
        "trajectory": str(bad),
        "lag_grid": {"start": 0.1, "step": 0.1, "count": 3},
    })
    assert main(["stats", "--config", cfg, "--out", str(tmp_path)]) == 2


# ---------------------------------------------------------------------------
# estimate and report
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def estimate_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("estimate")
    cfg = _write(tmp, TW_ESTIMATE)
    out = tmp / "run"
    code = main(["estimate", "--config", cfg, "--out", str(out)])
    return code, cfg, out


def test_estimate_end_to_end(estimate_run):
    code, _, out = estimate_run
    assert code == 0
    for name in ("estimates.csv", "starts.csv", "data_statistics.csv",
                 "surrogate.json", "manifest.json", "data.traj"):
        assert (out / name).exists(), name
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["pipeline"] == "triplewell_response"
    est = doc["estimate"]
    assert 0.5 <= est["a"] <= 1.5 and 0.0 <= est["gamma"] <= 0.5


def test_estimate_resume_reproduces(estimate_run, tmp_path):
    code, cfg, out = estimate_run
    assert code == 0
    # rerun against the stored data trajectory: byte-identical estimates
    out2 = tmp_path / "resumed"
    out2.mkdir()
    (out2 / "data.traj").write_bytes((out / "data.traj").read_bytes())
    meta = out / "data.traj.meta.json"
    (out2 / "data.traj.meta.json").write_bytes(meta.read_bytes())
    assert main(["estimate", "--config", cfg, "--out", str(out2),
                 "--resume"]) == 0
    assert (out2 / "estimates.csv").read_bytes() == \
        (out / "estimates.csv").read_bytes()


def test_estimate_dry_run(estimate_run, tmp_path, capsys):
    _, cfg, _ = estimate_run
    out = tmp_path / "nothing"
    assert main(["estimate", "--config", cfg, "--out", str(out),
                 "--dry-run"]) == 0
    assert not out.exists()
    text = capsys.readouterr().out
    assert "9 training nodes" in text and "8 starts" in text


def test_report_prints_table(estimate_run, capsys):
    code, cfg, out = estimate_run
    assert code == 0
    capsys.readouterr()
    assert main(["report", "--config", cfg, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "triplewell_response" in text
    assert "gamma" in text and "inliers" in text


def test_report_without_manifest_exit_2(tmp_path):
    cfg = _write(tmp_path, TW_ESTIMATE)
    assert main(["report", "--config", cfg, "--out", str(tmp_path)]) == 2


# ---------------------------------------------------------------------------
# sensitivity
# ---------------------------------------------------------------------------

def test_sensitivity_command(tmp_path):
    doc = {
        "model": "harmonic",
        "true_theta": {"gamma": 2.0, "kBT": 1.0, "k": 4.0, "x0": 0.0},
        "sensitivity": {"parameter": "k", "ensemble_size": 4,
                        "horizon": 0.01, "dt": 1e-3},
    }
    cfg = _write(tmp_path, doc)
    out = tmp_path / "run"
    assert main(["sensitivity", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "sensitivity_k.csv").exists()


def test_sensitivity_diffusion_parameter_exit_1(tmp_path):
    doc = {
        "model": "harmonic",
        "true_theta": {"gamma": 2.0, "kBT": 1.0, "k": 4.0, "x0": 0.0},
        "sensitivity": {"parameter": "kBT", "ensemble_size": 4,
                        "horizon": 0.01, "dt": 1e-3},
    }
    cfg = _write(tmp_path, doc)
    assert main(["sensitivity", "--config", cfg,
                 "--out", str(tmp_path)]) == 1


# ---------------------------------------------------------------------------
# precedence: --flag > environment > config
# ---------------------------------------------------------------------------

def test_out_env_precedence(tmp_path, monkeypatch):
    cfg = _write(tmp_path, LM_SIM)
    env_out = tmp_path / "from_env"
    monkeypatch.setenv("RESPFIT_OUT", str(env_out))
    assert main(["simulate", "--config", cfg]) == 0
    assert (env_out / "data.traj").exists()
    flag_out = tmp_path / "from_flag"
    assert main(["simulate", "--config", cfg, "--out", str(flag_out)]) == 0
    assert (flag_out / "data.traj").exists()


def test_out_missing_exit_2(tmp_path, monkeypatch):
    monkeypatch.delenv("RESPFIT_OUT", raising=False)
    cfg = _write(tmp_path, LM_SIM)
    assert main(["simulate", "--config", cfg]) == 2


def test_threads_env_precedence(tmp_path, monkeypatch, capsys):
    cfg = _write(tmp_path, dict(TW_ESTIMATE, threads=1))
    monkeypatch.setenv("RESPFIT_THREADS", "3")
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path),
                 "--dry-run"]) == 0
    assert "threads=3" in capsys.readouterr().out
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path),
                 "--dry-run", "--threads", "2"]) == 0
    assert "threads=2" in capsys.readouterr().out


def test_threads_env_invalid_exit_2(tmp_path, monkeypatch):
    cfg = _write(tmp_path, TW_ESTIMATE)
    monkeypatch.setenv("RESPFIT_THREADS", "many")
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path),
                 "--dry-run"]) == 2


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------

def test_unknown_config_field_exit_2(tmp_path):
    cfg = _write(tmp_path, dict(LM_SIM, tempersture=1.0))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_unknown_nested_field_exit_2(tmp_path):
    doc = dict(TW_ESTIMATE)
    doc["solver"] = {"n_starts": 8, "stepsize": 0.1}
    cfg = _write(tmp_path, doc)
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_unknown_pipeline_exit_2(tmp_path):
    cfg = _write(tmp_path, dict(TW_ESTIMATE, pipeline="magic"))
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_unknown_model_exit_3(tmp_path):
    cfg = _write(tmp_path, dict(LM_SIM, model="quartic"))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 3


def test_missing_required_field_exit_2(tmp_path):
    doc = dict(LM_SIM)
    del doc["n_samples"]
    cfg = _write(tmp_path, doc)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_malformed_yaml_exit_2(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("model: [unclosed\n")
    assert main(["simulate", "--config", str(path),
                 "--out", str(tmp_path)]) == 2


def test_missing_config_file_exit_2(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "absent.yaml"),
                 "--out", str(tmp_path)]) == 2


def test_blowup_exit_4(tmp_path):
    doc = dict(LM_SIM, scheme="euler_maruyama", dt=0.5, lag=0.5,
               n_samples=500, burn_in=0.0)
    cfg = _write(tmp_path, doc)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 4
