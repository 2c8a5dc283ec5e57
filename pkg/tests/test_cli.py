"""CLI commands, exit codes, file stamping, and reproducibility."""

import json
import os

from riskmp.cli import config_hash, load_config, main

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def _small_portfolio_config(tmp_path, **overrides):
    cfg = {
        "problem": {"type": "portfolio", "phi_low": 0.1, "phi_high": 1.5},
        "risk": {"type": "expectation"},
        "sim": {"n_steps": 20, "n_paths": 2000, "n_actions": 11},
        "basis": {"degree": 3, "ridge": 1e-08},
        "msa": {"max_iters": 6, "tol": 1e-06},
        "init_policy": "uniform",
        "seed": 314,
    }
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path), cfg


def _read_lines(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_unknown_command_exits_2(tmp_path, capsys):
    assert main(["frobnicate", "--config", "x"]) == 2


def test_missing_seed_is_config_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"problem": {"type": "portfolio"}, "risk": {"type": "expectation"}}))
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_bad_risk_type_is_config_error(tmp_path):
    path, _ = _small_portfolio_config(tmp_path, risk={"type": "cvar"})
    assert main(["solve", "--config", path, "--out", str(tmp_path / "o")]) == 2


def test_infeasible_exponents_rejected(tmp_path):
    # growth with p = pbar violates the strict order inequality
    problem = {
        "type": "custom",
        "dim_x": 1,
        "dim_w": 1,
        "action_grid": [0.0, 1.0],
        "drift": {"const": [[0.0], [1.0]]},
        "diffusion": {"const": [[[0.1]], [[0.1]]]},
        "terminal": {"const": 0.0, "x": [1.0]},
        "x0": [0.0],
        "growth": {
            "L": 1.0, "pbar1": 0.0, "pbar2": 0.0, "pbar3": "inf",
            "pbar": 2.0, "p1": 0.0, "p2": 0.0, "p1_prime": 0.0,
            "p2_prime": 0.0, "p": 2.0,
        },
    }
    path, _ = _small_portfolio_config(tmp_path, problem=problem)
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 2


def test_solve_emits_stamped_artifacts(tmp_path):
    path, cfg = _small_portfolio_config(tmp_path)
    out = str(tmp_path / "run")
    assert main(["solve", "--config", path, "--out", out]) == 0
    expected = [
        "run_config.json",
        "objective_trace.csv",
        "policy_mean.csv",
        "policy_table.csv",
        "adjoint_summary.csv",
        "risk_premium.csv",
        "solve_summary.json",
    ]
    for name in expected:
        assert os.path.exists(os.path.join(out, name)), name
    stamp = f"# config_hash={config_hash(load_config(path))} seed=314"
    for name in expected:
        if name.endswith(".csv"):
            first = open(os.path.join(out, name)).readline().strip()
            assert first == stamp, name
    summary = json.load(open(os.path.join(out, "solve_summary.json")))
    assert summary["seed"] == 314
    assert summary["iterations"] >= 1
    # risk-neutral portfolio: premium is identically zero
    assert abs(summary["risk_premium"]["iota_mean"]) <= 1e-8


def test_seed_override_changes_hash(tmp_path):
    path, cfg = _small_portfolio_config(tmp_path)
    h1 = config_hash(load_config(path))
    h2 = config_hash(load_config(path, seed_override=999))
    assert h1 != h2


def test_simulate_emits_summaries(tmp_path):
    path, _ = _small_portfolio_config(tmp_path)
    out = str(tmp_path / "sim")
    assert main(["simulate", "--config", path, "--out", out]) == 0
    cost = json.load(open(os.path.join(out, "cost_summary.json")))
    assert cost["n_paths"] == 2000
    assert "max_abs_terminal_state" in cost
    lines = open(os.path.join(out, "paths_summary.csv")).read().splitlines()
    assert len(lines) == 2 + 21  # stamp + header + one row per node


def test_report_renders_and_refuses_mismatch(tmp_path):
    path, _ = _small_portfolio_config(tmp_path)
    out = str(tmp_path / "run")
    assert main(["solve", "--config", path, "--out", out]) == 0
    assert main(["report", "--config", path, "--out", out]) == 0
    for name in ("report_objective.csv", "report_policy_vs_time.csv",
                 "report_risk_premium.csv"):
        assert os.path.exists(os.path.join(out, name)), name
    other, _ = _small_portfolio_config(tmp_path, seed=777)
    assert main(["report", "--config", other, "--out", out]) == 2


def test_report_without_solve_is_config_error(tmp_path):
    path, _ = _small_portfolio_config(tmp_path)
    assert main(["report", "--config", path, "--out", str(tmp_path / "empty")]) == 2


def test_runtime_error_writes_record(tmp_path):
    # Pure-diffusion sign problem under a uniform start has identically zero
    # cost, where the mean-deviation derivative does not exist: the solver
    # aborts and the CLI records the structured error.
    cfg = {
        "problem": {"type": "example1"},
        "risk": {"type": "mean_deviation", "beta": 0.5},
        "sim": {"n_steps": 10, "n_paths": 200},
        "msa": {"max_iters": 3},
        "seed": 5,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = str(tmp_path / "boom")
    assert main(["solve", "--config", str(path), "--out", out]) == 1
    record = json.load(open(os.path.join(out, "error.json")))
    assert record["error"] == "DegenerateSample"


def test_repeated_runs_byte_identical(tmp_path):
    path, _ = _small_portfolio_config(
        tmp_path, risk={"type": "entropic", "theta": 1.0}
    )
    outs = [str(tmp_path / f"d{i}") for i in range(3)]
    assert main(["solve", "--config", path, "--out", outs[0], "--threads", "1"]) == 0
    assert main(["solve", "--config", path, "--out", outs[1], "--threads", "4"]) == 0
    assert main(["solve", "--config", path, "--out", outs[2]]) == 0
    for name in os.listdir(outs[0]):
        base = _read_lines(os.path.join(outs[0], name))
        for other in outs[1:]:
            assert base == _read_lines(os.path.join(other, name)), name


def test_bundled_configs_parse():
    for name in os.listdir(CONFIGS):
        cfg = load_config(os.path.join(CONFIGS, name))
        assert "seed" in cfg


def test_bundled_riskneutral_solve_recovers_merton(tmp_path):
    cfg_path = os.path.join(CONFIGS, "portfolio_riskneutral.json")
    out = str(tmp_path / "bundle")
    assert main(["solve", "--config", cfg_path, "--out", out]) == 0
    summary = json.load(open(os.path.join(out, "solve_summary.json")))
    assert abs(summary["mean_action_min"] - 2.0 / 3.0) <= 0.05
    assert abs(summary["mean_action_max"] - 2.0 / 3.0) <= 0.05
    assert abs(summary["risk_premium"]["iota_mean"]) <= 1e-3


def test_verify_command_passes_and_emits_table(tmp_path):
    cfg_path = os.path.join(CONFIGS, "portfolio_riskneutral.json")
    out = str(tmp_path / "verify")
    assert main(["verify", "--config", cfg_path, "--out", out]) == 0
    lines = open(os.path.join(out, "verify_report.csv")).read().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "name,passed,detail"
    rows = lines[2:]
    assert len(rows) >= 20
    assert all(",True," in row for row in rows)


def test_config_hash_is_stable_and_canonical(tmp_path):
    path, cfg = _small_portfolio_config(tmp_path)
    h1 = config_hash(load_config(path))
    # key order must not matter
    reordered = dict(reversed(list(cfg.items())))
    path2 = tmp_path / "cfg2.json"
    path2.write_text(json.dumps(reordered))
    assert config_hash(load_config(str(path2))) == h1
