"""Slice regressions and the backward adjoint solvers."""

import math

import numpy as np
import pytest

from riskmp import (
    BrownianDriver,
    MeasurePolicy,
    RankDeficient,
    RegressionBasis,
    build_time_grid,
    fit_conditional,
    martingale_diagnostics,
    sample_brownian,
    simulate_forward,
    solve_adjoint,
    solve_adjoint_system,
    solve_risk_adjustment,
)
from conftest import make_model


# ------------------------------------------------------------ fit_conditional

def test_fit_constant_targets_is_exact(rng):
    states = rng.standard_normal((500, 1))
    fit = fit_conditional(RegressionBasis(degree=3), states, np.full(500, 4.2))
    np.testing.assert_allclose(fit.fitted, 4.2, atol=1e-12)
    assert fit.residual <= 1e-10
    np.testing.assert_allclose(fit.predict(np.array([[9.9]])), 4.2, atol=1e-9)


def test_fit_recovers_exact_linear_relation(rng):
    states = rng.standard_normal((300, 1))
    targets = 2.0 * states[:, 0] - 1.0
    fit = fit_conditional(RegressionBasis(degree=1, ridge=0.0), states, targets)
    assert fit.residual_rel <= 1e-10
    np.testing.assert_allclose(fit.predict(np.array([[0.5]])), [0.0], atol=1e-10)


def test_degree_zero_two_points_predicts_mean():
    # Normal equations with only an intercept: prediction is the target mean.
    states = np.array([[0.0], [1.0]])
    targets = np.array([1.0, 3.0])
    fit = fit_conditional(RegressionBasis(degree=0), states, targets)
    np.testing.assert_allclose(fit.fitted, 2.0)
    np.testing.assert_allclose(fit.predict(np.array([[7.0]])), 2.0)


def test_rank_deficient_raises_without_ridge():
    states = np.array([[1.0], [1.0], [1.0]])
    with pytest.raises(RankDeficient):
        fit_conditional(RegressionBasis(degree=1, ridge=0.0), states, np.arange(3.0))


def test_higher_degree_never_increases_residual(rng):
    states = rng.standard_normal((200, 1))
    targets = np.tanh(states[:, 0]) + 0.1 * rng.standard_normal(200)
    residuals = [
        fit_conditional(RegressionBasis(degree=d, ridge=0.0), states, targets).residual
        for d in range(5)
    ]
    assert all(residuals[i + 1] <= residuals[i] + 1e-12 for i in range(4))


def test_multi_target_fit_matches_column_fits(rng):
    states = rng.standard_normal((150, 1))
    targets = rng.standard_normal((150, 3))
    basis = RegressionBasis(degree=2)
    stacked = fit_conditional(basis, states, targets)
    for j in range(3):
        single = fit_conditional(basis, states, targets[:, j])
        np.testing.assert_allclose(stacked.fitted[:, j], single.fitted, atol=1e-12)


# ---------------------------------------------------- risk adjustment solve

def _brownian_ensemble(n_paths=4000, n_steps=20, seed=31):
    model = make_model(
        [1.0], diffusion=lambda t, x, a: np.ones((x.shape[0], 1, 1))
    )
    grid = build_time_grid(1.0, n_steps)
    driver = sample_brownian(grid, n_paths, 1, seed=seed)
    ens = simulate_forward(model, MeasurePolicy.dirac(0, 1), driver, grid)
    return model, ens


def test_constant_derivative_collapses_exactly():
    _, ens = _brownian_ensemble()
    basis = RegressionBasis(degree=3)
    yprime, zprime, _ = solve_risk_adjustment(ens, np.ones(ens.n_paths), basis)
    assert np.abs(yprime - 1.0).max() <= 1e-10
    assert np.abs(zprime).max() <= 1e-10
    yprime, zprime, _ = solve_risk_adjustment(ens, np.full(ens.n_paths, 3.7), basis)
    assert np.abs(yprime - 3.7).max() <= 1e-10
    assert np.abs(zprime).max() <= 1e-10


def test_lattice_surrogate_branch_average():
    # Two-step binary lattice: four paths enumerate the increment signs, so
    # the step-1 conditional mean of D is the exact average over the two
    # branches that share the step-1 state.
    grid = build_time_grid(1.0, 2)
    root = math.sqrt(grid.dt)
    inc = np.array(
        [
            [[+root], [+root]],
            [[+root], [-root]],
            [[-root], [+root]],
            [[-root], [-root]],
        ]
    )
    driver = BrownianDriver(increments=inc, seed=0, stream_ids=np.arange(4, dtype=np.uint64))
    model = make_model([1.0], diffusion=lambda t, x, a: np.ones((x.shape[0], 1, 1)))
    ens = simulate_forward(model, MeasurePolicy.dirac(0, 1), driver, grid)
    d = np.array([4.0, 1.0, -2.0, 6.0])
    # Tiny ridge: the step-0 slice is deterministic (all paths at x0), which
    # plain least squares would reject as rank deficient.
    basis = RegressionBasis(degree=1, ridge=1e-12)
    yprime, _, _ = solve_risk_adjustment(ens, d, basis)
    np.testing.assert_allclose(yprime[:, 2], d)
    np.testing.assert_allclose(yprime[:2, 1], (4.0 + 1.0) / 2.0, atol=1e-10)
    np.testing.assert_allclose(yprime[2:, 1], (-2.0 + 6.0) / 2.0, atol=1e-10)
    np.testing.assert_allclose(yprime[:, 0], d.mean(), atol=1e-10)


def test_martingale_property_of_yprime():
    _, ens = _brownian_ensemble(n_paths=8000)
    d = np.tanh(ens.states[:, -1, 0]) + 1.5
    yprime, _, _ = solve_risk_adjustment(ens, d, RegressionBasis(degree=3))
    report = martingale_diagnostics(yprime)
    assert not report.insufficient_sample
    assert np.all(report.within_3se)


# ------------------------------------------------------------- adjoint solve

def test_driverless_bsde_constant_y():
    # Zero state-gradients and a deterministic terminal state: y stays at its
    # terminal value and z vanishes.
    model = make_model(
        [1.0],
        drift=lambda t, x, a: np.ones((x.shape[0], 1)),
        terminal_dx=lambda x: np.full((x.shape[0], 1), 2.5),
    )
    grid = build_time_grid(1.0, 10)
    driver = sample_brownian(grid, 200, 1, seed=33)
    ens = simulate_forward(model, MeasurePolicy.dirac(0, 1), driver, grid)
    y, z, _ = solve_adjoint(
        model, ens, np.ones((200, 11)), MeasurePolicy.dirac(0, 1), RegressionBasis()
    )
    np.testing.assert_allclose(y, 2.5, atol=1e-9)
    assert np.abs(z).max() <= 1e-9


def test_linear_cost_gradient_gives_time_to_go():
    # b = 0, sigma = 1, c = x, g = 0, y' = 1: grad H = 1 so y_k = T - t_k.
    model = make_model(
        [1.0],
        diffusion=lambda t, x, a: np.ones((x.shape[0], 1, 1)),
        cost=lambda t, x, a: x[:, 0],
        cost_dx=lambda t, x, a: np.ones((x.shape[0], 1)),
    )
    grid = build_time_grid(1.0, 25)
    driver = sample_brownian(grid, 5000, 1, seed=34)
    ens = simulate_forward(model, MeasurePolicy.dirac(0, 1), driver, grid)
    y, z, _ = solve_adjoint(
        model,
        ens,
        np.ones((5000, 26)),
        MeasurePolicy.dirac(0, 1),
        RegressionBasis(degree=3),
    )
    expected = grid.horizon - grid.nodes
    assert np.abs(y[:, :, 0] - expected).max() <= 1e-2
    assert np.abs(z).max() <= 1e-2


def test_terminal_slices_are_exact(rng):
    model = make_model(
        [1.0],
        diffusion=lambda t, x, a: np.ones((x.shape[0], 1, 1)),
        terminal=lambda x: x[:, 0] ** 2,
        terminal_dx=lambda x: 2.0 * x,
    )
    grid = build_time_grid(1.0, 5)
    driver = sample_brownian(grid, 300, 1, seed=31)
    ens = simulate_forward(model, MeasurePolicy.dirac(0, 1), driver, grid)
    d = rng.standard_normal(300) + 2.0
    adj = solve_adjoint_system(model, ens, d, RegressionBasis(degree=2))
    assert np.array_equal(adj.yprime[:, -1], d)
    np.testing.assert_array_equal(
        adj.y[:, -1], d[:, None] * (2.0 * ens.states[:, -1])
    )


# ---------------------------------------------------------------- diagnostics

def test_martingale_diagnostics_flat_input():
    report = martingale_diagnostics(np.ones((50, 8)))
    np.testing.assert_array_equal(report.drift, 0.0)
    assert np.all(report.within_3se)


def test_martingale_diagnostics_single_path():
    report = martingale_diagnostics(np.ones((1, 8)))
    assert report.insufficient_sample
    assert np.all(np.isnan(report.standard_error))
