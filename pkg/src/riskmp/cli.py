"""Command-line entry point: simulate, solve, verify, report.

Configuration is a single JSON document; outputs are CSV tables with a
one-line `# config_hash=... seed=...` header plus JSON summaries carrying the
same stamp, so any result file can be traced to the exact configuration and
seed that produced it.  Runs are deterministic: all randomness flows from the
config seed through counter-based per-path streams, reductions are
fixed-order, and no timestamps or host data are written.

Exit codes: 0 success, 1 runtime failure (with error.json in the output
directory), 2 configuration error.
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .adjoint import RegressionBasis, martingale_diagnostics, solve_adjoint_system
from .control import MsaConfig, msa_solve
from .errors import ConfigInvalid, NonPositiveAdjustment, RiskmpError
from .models import model_from_tables, on_off_volatility_model, sign_volatility_model
from .portfolio import PortfolioParams, build_portfolio_model, risk_premium
from .risk import EmpiricalSample, RiskFunction, evaluate, l_derivative
from .sde import (
    MeasurePolicy,
    build_time_grid,
    check_feasibility,
    sample_brownian,
    simulate_forward,
    total_cost,
)
from .verification import run_checks

_PROBLEMS = ("portfolio", "example1", "example2", "custom")
_RISKS = ("expectation", "mean_deviation", "smoothed_semideviation", "entropic")


def config_hash(cfg):
    """Short stable hash of the effective configuration."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _fail(msg):
    raise ConfigInvalid(msg)


def load_config(path, seed_override=None):
    """Parse, default-fill, and validate an experiment configuration."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        _fail(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        _fail(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        _fail("config root must be an object")

    cfg.setdefault("sim", {})
    cfg.setdefault("basis", {})
    cfg.setdefault("msa", {})
    cfg.setdefault("init_policy", "uniform")
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    if "seed" not in cfg:
        _fail("config must set an explicit seed")

    problem = cfg.get("problem")
    if not isinstance(problem, dict) or problem.get("type") not in _PROBLEMS:
        _fail(f"problem.type must be one of {_PROBLEMS}")
    risk = cfg.get("risk")
    if not isinstance(risk, dict) or risk.get("type") not in _RISKS:
        _fail(f"risk.type must be one of {_RISKS}")

    sim = cfg["sim"]
    sim.setdefault("n_steps", 50)
    sim.setdefault("n_paths", 20_000)
    sim.setdefault("n_actions", 31)
    basis = cfg["basis"]
    basis.setdefault("degree", 3)
    basis.setdefault("ridge", 1e-8)
    msa = cfg["msa"]
    msa.setdefault("max_iters", 25)
    msa.setdefault("damping_base", 0.5)
    msa.setdefault("damping_scale", 10.0)
    msa.setdefault("eta", 1e-9)
    msa.setdefault("tol", 1e-4)
    msa.setdefault("n_boot", 200)
    return cfg


def build_experiment(cfg):
    """Instantiate model, grid, driver, risk, basis, and policies from config.

    Raises ConfigInvalid on any invalid parameter, including feasibility
    violations of the problem's growth exponents.
    """
    problem = cfg["problem"]
    sim = cfg["sim"]
    try:
        if problem["type"] == "portfolio":
            params = PortfolioParams(
                r=problem.get("r", 0.02),
                mu=problem.get("mu", 0.08),
                sigma=problem.get("sigma", 0.3),
                phi_low=problem.get("phi_low", 0.1),
                phi_high=problem.get("phi_high", 1.5),
                x0=problem.get("x0", 0.0),
                horizon=problem.get("horizon", 1.0),
                allow_zero_lower=problem.get("allow_zero_lower", False),
            )
            model = build_portfolio_model(params, sim["n_actions"])
            horizon = params.horizon
        elif problem["type"] == "example1":
            model = sign_volatility_model()
            horizon = problem.get("horizon", 1.0)
            params = None
        elif problem["type"] == "example2":
            model = on_off_volatility_model()
            horizon = problem.get("horizon", 1.0)
            params = None
        else:
            model = model_from_tables(problem)
            horizon = problem.get("horizon", 1.0)
            params = None

        rk = cfg["risk"]
        kind = rk["type"]
        if kind == "expectation":
            risk = RiskFunction.expectation()
        elif kind == "mean_deviation":
            risk = RiskFunction.mean_deviation(rk.get("beta", 0.5))
        elif kind == "smoothed_semideviation":
            risk = RiskFunction.smoothed_semideviation(
                rk.get("beta", 0.5), rk.get("epsilon", 0.1)
            )
        else:
            risk = RiskFunction.entropic(rk.get("theta", 1.0))

        grid = build_time_grid(horizon, int(sim["n_steps"]))
        basis = RegressionBasis(
            degree=int(cfg["basis"]["degree"]), ridge=float(cfg["basis"]["ridge"])
        )
        m = cfg["msa"]
        msa_cfg = MsaConfig(
            max_iters=int(m["max_iters"]),
            damping_base=float(m["damping_base"]),
            damping_scale=float(m["damping_scale"]),
            eta=float(m["eta"]),
            tol=float(m["tol"]),
            n_boot=int(m["n_boot"]),
            seed=int(cfg["seed"]),
        )
        init = _init_policy(cfg["init_policy"], model.n_atoms)
    except RiskmpError as exc:
        raise ConfigInvalid(str(exc)) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad configuration value: {exc}") from exc

    if model.growth is not None:
        report = check_feasibility(model.growth)
        if not report.feasible:
            bad = "; ".join(name for name, ok, _ in report.checks if not ok)
            _fail(f"problem exponents are infeasible: {bad}")

    return {
        "model": model,
        "params": params,
        "risk": risk,
        "grid": grid,
        "basis": basis,
        "msa": msa_cfg,
        "init": init,
        "n_paths": int(sim["n_paths"]),
        "seed": int(cfg["seed"]),
    }


def _init_policy(spec, n_atoms):
    if spec == "uniform":
        return MeasurePolicy.uniform(n_atoms)
    if isinstance(spec, dict) and spec.get("type") == "dirac":
        return MeasurePolicy.dirac(int(spec["atom"]), n_atoms)
    if isinstance(spec, dict) and spec.get("type") == "constant":
        return MeasurePolicy.constant(spec["weights"])
    _fail(f"unsupported init_policy {spec!r}")


# ------------------------------------------------------------------ file IO

def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))  # shortest round-trip form, numpy scalars included
    return str(v)


def _write_csv(path, stamp, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={stamp[0]} seed={stamp[1]}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path, stamp, payload):
    doc = {"config_hash": stamp[0], "seed": stamp[1]}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _read_stamp(path):
    with open(path) as fh:
        line = fh.readline().strip()
    if not line.startswith("# config_hash="):
        _fail(f"{os.path.basename(path)} carries no config stamp")
    try:
        hash_part, seed_part = line[2:].split(" ")
        return hash_part.split("=")[1], int(seed_part.split("=")[1])
    except (IndexError, ValueError):
        _fail(f"{os.path.basename(path)} has a malformed stamp line")


# ----------------------------------------------------------------- commands

def _policy_step_stats(model, grid, policy, ensemble):
    """Per-step mean action, mean weights, and entropy under the policy."""
    atoms = model.action_grid
    rows = []
    tables = []
    for k in range(grid.n_steps):
        w = policy.weights_at(k, grid.nodes[k], ensemble.states[:, k])
        mean_w = w.mean(axis=0)
        mean_action = float(mean_w @ atoms[:, 0]) if model.dim_a == 1 else float("nan")
        with np.errstate(divide="ignore", invalid="ignore"):
            logw = np.where(w > 0, np.log(np.maximum(w, 1e-300)), 0.0)
        entropy = float(np.mean(-(w * logw).sum(axis=1)))
        rows.append((k, float(grid.nodes[k]), mean_action, entropy))
        tables.append(mean_w)
    return rows, tables


def cmd_simulate(cfg, out_dir, stamp):
    exp = build_experiment(cfg)
    model, grid = exp["model"], exp["grid"]
    driver = sample_brownian(grid, exp["n_paths"], model.dim_w, exp["seed"])
    ens = simulate_forward(model, exp["init"], driver, grid)
    costs = total_cost(ens, model)

    rows = []
    for k in range(grid.n_steps + 1):
        xk = ens.states[:, k]
        row = [k, float(grid.nodes[k])]
        for i in range(model.dim_x):
            row += [float(xk[:, i].mean()), float(xk[:, i].std())]
        row.append(float(ens.running_cost[:, k].mean()))
        rows.append(row)
    header = ["step", "time"]
    for i in range(model.dim_x):
        header += [f"x{i}_mean", f"x{i}_std"]
    header.append("running_cost_mean")
    _write_csv(os.path.join(out_dir, "paths_summary.csv"), stamp, header, rows)

    _write_json(
        os.path.join(out_dir, "cost_summary.json"),
        stamp,
        {
            "n_paths": exp["n_paths"],
            "cost_mean": float(costs.mean()),
            "cost_std": float(costs.std(ddof=1)) if len(costs) > 1 else 0.0,
            "risk_value": evaluate(exp["risk"], EmpiricalSample(costs)),
            # diagnostic: terminal values are unbounded, the sample max grows
            # with the path count
            "max_abs_terminal_state": float(np.abs(ens.states[:, -1]).max()),
        },
    )
    return 0


def cmd_solve(cfg, out_dir, stamp):
    exp = build_experiment(cfg)
    model, grid, risk, basis = exp["model"], exp["grid"], exp["risk"], exp["basis"]
    driver = sample_brownian(grid, exp["n_paths"], model.dim_w, exp["seed"])
    policy, report = msa_solve(
        model, risk, exp["init"], exp["msa"], driver, basis, grid
    )

    _write_csv(
        os.path.join(out_dir, "objective_trace.csv"),
        stamp,
        [
            "iter",
            "objective",
            "objective_se",
            "hamiltonian_gap",
            "policy_change",
            "policy_entropy",
            "martingale_max_drift",
        ],
        [
            (
                i,
                report.objectives[i],
                report.objective_ses[i],
                report.hamiltonian_gaps[i],
                report.policy_changes[i],
                report.policy_entropies[i],
                report.martingale_max_drifts[i],
            )
            for i in range(report.n_iters)
        ],
    )

    ens = simulate_forward(model, policy, driver, grid)
    costs = total_cost(ens, model)
    deriv = l_derivative(risk, EmpiricalSample(costs))
    adj = solve_adjoint_system(model, ens, deriv, basis)
    mart = martingale_diagnostics(adj.yprime)

    policy_rows, weight_tables = _policy_step_stats(model, grid, policy, ens)
    _write_csv(
        os.path.join(out_dir, "policy_mean.csv"),
        stamp,
        ["step", "time", "mean_action", "entropy"],
        policy_rows,
    )
    table_rows = []
    for k, mean_w in enumerate(weight_tables):
        for j in range(model.n_atoms):
            table_rows.append(
                (k, j, float(model.action_grid[j, 0]), float(mean_w[j]))
            )
    _write_csv(
        os.path.join(out_dir, "policy_table.csv"),
        stamp,
        ["step", "atom", "action", "mean_weight"],
        table_rows,
    )

    _write_csv(
        os.path.join(out_dir, "adjoint_summary.csv"),
        stamp,
        ["step", "time", "yprime_mean", "yprime_drift", "drift_se"],
        [
            (
                k,
                float(grid.nodes[k]),
                float(adj.yprime[:, k].mean()),
                float(mart.drift[k]),
                float(mart.standard_error[k]),
            )
            for k in range(grid.n_steps + 1)
        ],
    )

    premium_stats = None
    if exp["params"] is not None:
        try:
            iota = risk_premium(adj.yprime, adj.zprime, exp["params"].sigma)
            _write_csv(
                os.path.join(out_dir, "risk_premium.csv"),
                stamp,
                ["step", "time", "iota_mean", "iota_std"],
                [
                    (
                        k,
                        float(grid.nodes[k]),
                        float(iota[:, k].mean()),
                        float(iota[:, k].std()),
                    )
                    for k in range(grid.n_steps)
                ],
            )
            premium_stats = {
                "iota_mean": float(iota.mean()),
                "iota_abs_max": float(np.abs(iota).max()),
            }
        except NonPositiveAdjustment as exc:
            premium_stats = {"unavailable": str(exc)}

    mean_actions = [row[2] for row in policy_rows]
    _write_json(
        os.path.join(out_dir, "solve_summary.json"),
        stamp,
        {
            "iterations": report.n_iters,
            "converged": report.converged,
            "max_iters_exceeded": report.max_iters_exceeded,
            "best_iter": report.best_iter,
            "non_monotone_iters": report.non_monotone_iters,
            "final_objective": report.objectives[-1],
            "final_objective_se": report.objective_ses[-1],
            "final_hamiltonian_gap": report.hamiltonian_gaps[-1],
            "mean_action_min": min(mean_actions),
            "mean_action_max": max(mean_actions),
            "risk_premium": premium_stats,
        },
    )
    return 0


def cmd_verify(cfg, out_dir, stamp):
    # Config is validated (build_experiment already ran); the invariant suite
    # itself runs on its own fixed seeds and sizes.
    rows = run_checks()
    _write_csv(
        os.path.join(out_dir, "verify_report.csv"),
        stamp,
        ["name", "passed", "detail"],
        [(r.name, r.passed, r.detail) for r in rows],
    )
    failed = [r for r in rows if not r.passed]
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL':4} {r.name:36} {r.detail}")
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    return 1 if failed else 0


def cmd_report(cfg, out_dir, stamp):
    """Render plot-ready tables from a prior solve in the same directory."""
    wanted = {
        "objective_trace.csv": (
            "report_objective.csv",
            ["iter", "objective", "objective_se"],
            (0, 1, 2),
        ),
        "policy_mean.csv": (
            "report_policy_vs_time.csv",
            ["time", "mean_action"],
            (1, 2),
        ),
        "risk_premium.csv": (
            "report_risk_premium.csv",
            ["time", "iota_mean", "iota_std"],
            (1, 2, 3),
        ),
    }
    rendered = 0
    for name, (out_name, header, cols) in wanted.items():
        src = os.path.join(out_dir, name)
        if not os.path.exists(src):
            if name == "risk_premium.csv":
                continue  # not produced for non-portfolio problems
            _fail(f"missing input {name}; run `solve` first")
        file_hash, file_seed = _read_stamp(src)
        if file_hash != stamp[0] or file_seed != stamp[1]:
            _fail(
                f"{name} was produced by config_hash={file_hash} seed={file_seed}, "
                f"not the given config (hash={stamp[0]} seed={stamp[1]})"
            )
        with open(src) as fh:
            fh.readline()
            reader = csv.reader(fh)
            next(reader)
            rows = [[row[c] for c in cols] for row in reader]
        _write_csv(os.path.join(out_dir, out_name), stamp, header, rows)
        rendered += 1
    print(f"rendered {rendered} report tables in {out_dir}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "report": cmd_report,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="riskmp",
        description="Risk-aware stochastic control: simulate, solve, verify, report.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker hint; results are identical for any value",
    )
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        cfg = load_config(args.config, args.seed)
        build_experiment(cfg)  # fail fast on bad configs for every command
        stamp = (config_hash(cfg), int(cfg["seed"]))
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    os.makedirs(args.out, exist_ok=True)
    try:
        if args.command != "report":
            # `report` only reads an existing run; do not touch its record.
            with open(os.path.join(args.out, "run_config.json"), "w") as fh:
                json.dump(
                    {"config_hash": stamp[0], "effective_config": cfg},
                    fh,
                    sort_keys=True,
                    indent=2,
                )
                fh.write("\n")
        return _COMMANDS[args.command](cfg, args.out, stamp)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RiskmpError as exc:
        record = {
            "config_hash": stamp[0],
            "seed": stamp[1],
            "error": type(exc).__name__,
            "message": str(exc),
        }
        with open(os.path.join(args.out, "error.json"), "w") as fh:
            json.dump(record, fh, sort_keys=True, indent=2)
            fh.write("\n")
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
