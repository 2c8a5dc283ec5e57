"""Self-contained invariant suite behind the `verify` CLI command.

Each check is deterministic (fixed seeds, fixed sizes) and returns a named
pass/fail row, so the whole table is reproducible across runs and machines
with the same numpy version.  Sizes are trimmed for runtime; the pytest
suite carries the full-size acceptance runs.
"""

import math
from dataclasses import dataclass

import numpy as np

from .adjoint import (
    RegressionBasis,
    martingale_diagnostics,
    solve_adjoint_system,
    solve_risk_adjustment,
)
from .control import (
    HamiltonianContext,
    MsaConfig,
    _hamiltonian_atoms,
    minimize_hamiltonian,
    msa_solve,
)
from .errors import DegenerateSample
from .models import on_off_volatility_model, sign_volatility_model
from .portfolio import (
    PortfolioParams,
    brute_force_constant_policy,
    build_portfolio_model,
    merton_allocation,
)
from .risk import (
    EmpiricalSample,
    RiskFunction,
    directional_derivative_check,
    evaluate,
    l_derivative,
)
from .sde import (
    MeasurePolicy,
    build_time_grid,
    check_feasibility,
    convex_combine,
    sample_brownian,
    simulate_forward,
    simulate_variational,
    total_cost,
    validate_gradients,
)

SEED = 1_000_003


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _result(name, passed, detail):
    return CheckResult(name=name, passed=bool(passed), detail=detail)


def _risk_trio():
    return (
        RiskFunction.mean_deviation(0.5),
        RiskFunction.smoothed_semideviation(0.5, 0.1),
        RiskFunction.entropic(1.0),
    )


def _check_translation(rng):
    worst = 0.0
    x = rng.standard_normal(400)
    for risk in _risk_trio():
        base = evaluate(risk, EmpiricalSample(x))
        for _ in range(20):
            a = float(rng.uniform(-5, 5))
            worst = max(
                worst,
                abs(evaluate(risk, EmpiricalSample(x + a)) - base - a),
            )
    return _result("risk_translation_invariance", worst <= 1e-12, f"worst {worst:.2e}")


def _check_homogeneity(rng):
    x = rng.standard_normal(400)
    worst = 0.0
    md = RiskFunction.mean_deviation(0.5)
    for lam in (0.5, 2.0, 10.0):
        lhs = evaluate(md, EmpiricalSample(lam * x))
        worst = max(worst, abs(lhs - lam * evaluate(md, EmpiricalSample(x))) / lam)
        # Smoothed semideviation is homogeneous jointly with its width.
        s1 = RiskFunction.smoothed_semideviation(0.5, 0.1)
        s2 = RiskFunction.smoothed_semideviation(0.5, 0.1 * lam)
        lhs = evaluate(s2, EmpiricalSample(lam * x))
        worst = max(worst, abs(lhs - lam * evaluate(s1, EmpiricalSample(x))) / lam)
    return _result("risk_positive_homogeneity", worst <= 1e-12, f"worst {worst:.2e}")


def _check_monotonicity(rng):
    ok = True
    for risk in _risk_trio()[1:]:
        for _ in range(50):
            x = rng.standard_normal(200)
            y = x + rng.uniform(0, 1, 200)
            ok &= evaluate(risk, EmpiricalSample(x)) <= evaluate(
                risk, EmpiricalSample(y)
            ) + 1e-12
    return _result("risk_monotonicity", ok, "smoothed semidev + entropic, 100 pairs")


def _check_convexity(rng):
    worst = -math.inf
    for risk in _risk_trio():
        for _ in range(100):
            x = rng.standard_normal(200)
            y = rng.standard_normal(200)
            for lam in (0.25, 0.5, 0.75):
                lhs = evaluate(risk, EmpiricalSample(lam * x + (1 - lam) * y))
                rhs = lam * evaluate(risk, EmpiricalSample(x)) + (1 - lam) * evaluate(
                    risk, EmpiricalSample(y)
                )
                worst = max(worst, lhs - rhs)
    return _result("risk_convexity", worst <= 1e-12, f"worst violation {worst:.2e}")


def _check_sandwich(rng):
    beta, eps = 0.5, 0.1
    risk = RiskFunction.smoothed_semideviation(beta, eps)
    ok = True
    for _ in range(100):
        x = rng.standard_normal(int(rng.integers(2, 300)))
        m = x.mean()
        plain = m + beta * np.maximum(x - m, 0.0).mean()
        gap = evaluate(risk, EmpiricalSample(x)) - plain
        ok &= 0.0 < gap <= eps * beta * math.log(2.0)
    return _result("risk_semideviation_sandwich", ok, "0 < smoothed - plain <= eps*beta*ln2")


def _check_derivative_range(rng):
    x = EmpiricalSample(rng.standard_normal(4000))
    d_s = l_derivative(RiskFunction.smoothed_semideviation(0.5, 0.1), x)
    d_e = l_derivative(RiskFunction.entropic(1.0), x)
    ok = (
        np.all(d_s > 0.5)
        and np.all(d_s < 1.5)
        and abs(float(x.weights @ d_e) - 1.0) <= 1e-10
        and np.all(d_e > 0)
    )
    return _result("risk_derivative_range", ok, "smoothed in (1-b,1+b); entropic mean 1")


def _check_law_invariance(rng):
    x = rng.standard_normal(500)
    perm = rng.permutation(500)
    worst = 0.0
    for risk in (RiskFunction.expectation(),) + _risk_trio():
        worst = max(
            worst,
            abs(
                evaluate(risk, EmpiricalSample(x))
                - evaluate(risk, EmpiricalSample(x[perm]))
            ),
        )
    return _result("risk_law_invariance", worst <= 1e-12, f"worst {worst:.2e}")


def _check_degenerate_guard():
    try:
        l_derivative(RiskFunction.mean_deviation(0.5), EmpiricalSample([2.0, 2.0]))
        return _result("risk_degenerate_guard", False, "no error at constant sample")
    except DegenerateSample:
        return _result("risk_degenerate_guard", True, "constant sample refused")


def _check_directional(rng):
    sample = EmpiricalSample(rng.standard_normal(10_000))
    rows = []
    for risk, name in zip(_risk_trio(), ("mean_dev", "smoothed", "entropic")):
        worst = 0.0
        for _ in range(20):
            d = rng.standard_normal(10_000)
            d /= np.linalg.norm(d)
            worst = max(
                worst, directional_derivative_check(risk, sample, d, 1e-4).abs_error
            )
        rows.append(
            _result(f"derivative_fd_{name}", worst <= 1e-6, f"worst {worst:.2e}")
        )
    return rows


def _check_examples():
    rows = []
    grid = build_time_grid(1.0, 50)

    model = sign_volatility_model()
    driver = sample_brownian(grid, 4000, 1, seed=SEED + 1)
    mixed = simulate_forward(model, MeasurePolicy.constant([0.5, 0.5]), driver, grid)
    rows.append(
        _result(
            "example1_mixed_paths_zero",
            bool(np.all(mixed.states == 0.0)),
            "half/half mixture yields identically zero paths",
        )
    )
    strict = simulate_forward(model, MeasurePolicy.dirac(1, 2), driver, grid)
    xt2 = strict.states[:, -1, 0] ** 2
    se = xt2.std(ddof=1) / math.sqrt(len(xt2))
    rows.append(
        _result(
            "example1_strict_variance",
            abs(xt2.mean() - grid.horizon) <= 3 * se,
            f"|E[x_T^2] - T| = {abs(xt2.mean() - 1.0):.2e} <= 3SE = {3 * se:.2e}",
        )
    )

    model2 = on_off_volatility_model()
    driver2 = sample_brownian(grid, 10_000, 1, seed=SEED + 2)
    pi = MeasurePolicy.dirac(0, 2)
    q = MeasurePolicy.dirac(1, 2)
    base = simulate_forward(model2, pi, driver2, grid)
    ok = True
    worst = 0.0
    for eps in (0.1, 0.05, 0.025):
        pert = simulate_forward(model2, convex_combine(pi, q, eps), driver2, grid)
        peak = float(np.max(np.mean((pert.states - base.states) ** 2, axis=0)))
        ok &= peak <= 4.0 * grid.horizon * eps**2
        worst = max(worst, peak / (4.0 * grid.horizon * eps**2))
    rows.append(
        _result(
            "example2_perturbation_bound",
            ok,
            f"max ratio to 4*T*eps^2 bound: {worst:.3f}",
        )
    )
    return rows


def _check_variational():
    def drift(t, x, a):
        return a[0] - 0.5 * np.sin(x)

    def drift_dx(t, x, a):
        return (-0.5 * np.cos(x))[:, :, None]

    def diffusion(t, x, a):
        return (0.3 * a[0] + 0.1 * np.sin(x))[:, :, None]

    def diffusion_dx(t, x, a):
        return (0.1 * np.cos(x))[:, :, None, None]

    from .sde import ModelSpec, dirac_initial

    model = ModelSpec(
        dim_x=1,
        dim_w=1,
        dim_a=1,
        drift=drift,
        diffusion=diffusion,
        cost=lambda t, x, a: np.zeros(x.shape[0]),
        terminal=lambda x: np.zeros(x.shape[0]),
        drift_dx=drift_dx,
        diffusion_dx=diffusion_dx,
        cost_dx=lambda t, x, a: np.zeros((x.shape[0], 1)),
        terminal_dx=lambda x: np.zeros((x.shape[0], 1)),
        initial=dirac_initial(0.2),
        action_grid=np.array([[0.5], [1.0]]),
    )
    grid = build_time_grid(1.0, 40)
    driver = sample_brownian(grid, 3000, 1, seed=SEED + 3)
    pi = MeasurePolicy.dirac(0, 2)
    q = MeasurePolicy.dirac(1, 2)
    ens = simulate_forward(model, pi, driver, grid)
    delta, _ = simulate_variational(model, ens, q)
    ratios = []
    for alpha in (0.2, 0.1, 0.05):
        pert = simulate_forward(model, convex_combine(pi, q, alpha), driver, grid)
        resid = pert.states - ens.states - alpha * delta
        ratios.append(float(np.sqrt(np.mean(resid[:, :, 0] ** 2, axis=0)).max()) / alpha)
    ok = ratios[1] <= ratios[0] and ratios[2] <= ratios[1]
    return _result(
        "variational_linearization",
        ok,
        "residual/alpha = " + ", ".join(f"{r:.4f}" for r in ratios),
    )


def _check_hamiltonian(rng):
    rows = []
    model = build_portfolio_model(PortfolioParams(), 11)
    states = rng.standard_normal((64, 1))
    y = rng.standard_normal((64, 1))
    yprime = rng.uniform(0.5, 1.5, 64)
    z = rng.standard_normal((64, 1, 1))
    table = _hamiltonian_atoms(model, 0.3, states, y, yprime, z)

    w1 = rng.dirichlet(np.ones(11), size=64)
    w2 = rng.dirichlet(np.ones(11), size=64)
    lam = 0.35
    lhs = np.einsum("na,na->n", lam * w1 + (1 - lam) * w2, table)
    rhs = lam * np.einsum("na,na->n", w1, table) + (1 - lam) * np.einsum(
        "na,na->n", w2, table
    )
    rows.append(
        _result(
            "hamiltonian_measure_linearity",
            np.abs(lhs - rhs).max() <= 1e-12,
            f"worst {np.abs(lhs - rhs).max():.2e}",
        )
    )

    ctx = HamiltonianContext(
        t=0.3, x=states[0], y=y[0], yprime=float(yprime[0]), z=z[0]
    )
    w = minimize_hamiltonian(ctx, model, eta=1e-9)
    val = float(w @ table[0])
    rows.append(
        _result(
            "hamiltonian_minimizer_optimality",
            val <= table[0].min() + 1e-12,
            f"measure value {val:.6f} vs atom min {table[0].min():.6f}",
        )
    )

    sign_model = sign_volatility_model()
    tie_ctx = HamiltonianContext(
        t=0.0, x=np.zeros(1), y=np.zeros(1), yprime=1.0, z=np.zeros((1, 1))
    )
    w_tie = minimize_hamiltonian(tie_ctx, sign_model, eta=1e-9)
    rows.append(
        _result(
            "hamiltonian_tie_mixing",
            np.allclose(w_tie, [0.5, 0.5]),
            f"tied weights {w_tie}",
        )
    )
    return rows


def _check_adjoints():
    rows = []
    params = PortfolioParams()
    model = build_portfolio_model(params, 15)
    grid = build_time_grid(1.0, 30)
    driver = sample_brownian(grid, 6000, 1, seed=SEED + 4)
    basis = RegressionBasis(degree=3)
    pol = MeasurePolicy.uniform(15)
    ens = simulate_forward(model, pol, driver, grid)

    yp, zp, _ = solve_risk_adjustment(ens, np.ones(ens.n_paths), basis)
    rows.append(
        _result(
            "riskneutral_collapse",
            np.abs(yp - 1.0).max() <= 1e-8 and np.abs(zp).max() <= 1e-8,
            f"|y'-1| {np.abs(yp - 1.0).max():.1e}, |z'| {np.abs(zp).max():.1e}",
        )
    )

    risk = RiskFunction.entropic(1.0)
    cfg = MsaConfig(max_iters=6, tol=1e-4, seed=SEED)
    final, _ = msa_solve(model, risk, pol, cfg, driver, basis, grid)
    ens2 = simulate_forward(model, final, driver, grid)
    deriv = l_derivative(risk, EmpiricalSample(total_cost(ens2, model)))
    adj = solve_adjoint_system(model, ens2, deriv, basis)
    mart = martingale_diagnostics(adj.yprime)
    rows.append(
        _result(
            "martingale_diagnostics",
            bool(np.all(mart.within_3se)),
            f"max drift {mart.max_drift:.2e}",
        )
    )
    rows.append(
        _result(
            "positive_risk_adjustment",
            bool(np.all(adj.yprime > 0.0)),
            f"min y' {adj.yprime.min():.3f} (entropic)",
        )
    )

    # Identity y = -y', z = -z' needs a large sample: both sides are noisy
    # regression estimates, so the check runs on a dedicated wide ensemble
    # with a low-variance quadratic basis.
    model31 = build_portfolio_model(params, 31)
    grid50 = build_time_grid(1.0, 50)
    wide = sample_brownian(grid50, 200_000, 1, seed=SEED + 7)
    atom = int(np.argmin(np.abs(model31.action_grid[:, 0] - 1.0 / 3.0)))
    ens3 = simulate_forward(model31, MeasurePolicy.dirac(atom, 31), wide, grid50)
    deriv3 = l_derivative(risk, EmpiricalSample(total_cost(ens3, model31)))
    adj3 = solve_adjoint_system(model31, ens3, deriv3, RegressionBasis(degree=2))
    rel_y = float(
        np.linalg.norm(adj3.y[:, :, 0] + adj3.yprime) / np.linalg.norm(adj3.yprime)
    )
    rel_z = float(
        np.linalg.norm(adj3.z[:, :, 0, 0] + adj3.zprime[:, :, 0])
        / np.linalg.norm(adj3.zprime)
    )
    rows.append(
        _result(
            "portfolio_adjoint_identity",
            rel_y <= 1e-2 and rel_z <= 1e-2,
            f"rel y {rel_y:.2e}, rel z {rel_z:.2e}",
        )
    )
    return rows


def _check_portfolio():
    rows = []
    params = PortfolioParams()
    model = build_portfolio_model(params, 15)
    report = check_feasibility(model.growth)
    rows.append(
        _result(
            "portfolio_feasibility",
            report.feasible,
            "; ".join(n for n, ok, _ in report.checks if not ok) or "all inequalities hold",
        )
    )
    grads = validate_gradients(model, seed=SEED, n_probes=10)
    rows.append(
        _result(
            "portfolio_gradient_consistency",
            grads["ok"],
            f"worst rel err {max(v for k, v in grads.items() if k != 'ok'):.1e}",
        )
    )
    grid = build_time_grid(1.0, 50)
    driver = sample_brownian(grid, 10_000, 1, seed=SEED + 5)
    bf = brute_force_constant_policy(
        params, RiskFunction.expectation(), np.linspace(0.1, 1.5, 15), driver, grid
    )
    spacing = (1.5 - 0.1) / 14
    rows.append(
        _result(
            "brute_force_merton",
            abs(bf.best_phi - merton_allocation(params)) <= spacing + 1e-12,
            f"argmin {bf.best_phi:.3f} vs merton {merton_allocation(params):.3f}",
        )
    )
    return rows


def _check_determinism():
    model = build_portfolio_model(PortfolioParams(), 7)
    grid = build_time_grid(1.0, 20)
    driver = sample_brownian(grid, 500, 1, seed=SEED + 6)
    pol = MeasurePolicy.uniform(7)
    a = simulate_forward(model, pol, driver, grid)
    b = simulate_forward(model, pol, driver, grid)
    same = np.array_equal(a.states, b.states) and np.array_equal(
        sample_brownian(grid, 500, 1, seed=SEED + 6).increments, driver.increments
    )
    return _result("simulation_determinism", same, "bit-identical resimulation")


def run_checks():
    """Run the full invariant suite; returns a list of CheckResult rows."""
    rng = np.random.default_rng(SEED)
    rows = [
        _check_translation(rng),
        _check_homogeneity(rng),
        _check_monotonicity(rng),
        _check_convexity(rng),
        _check_sandwich(rng),
        _check_derivative_range(rng),
        _check_law_invariance(rng),
        _check_degenerate_guard(),
    ]
    rows.extend(_check_directional(rng))
    rows.extend(_check_examples())
    rows.append(_check_variational())
    rows.extend(_check_hamiltonian(rng))
    rows.extend(_check_adjoints())
    rows.extend(_check_portfolio())
    rows.append(_check_determinism())
    return rows
