"""Hamiltonian evaluation, pointwise minimization, and the solver iteration.

The Hamiltonian H = y.b + y'.c + tr[z sigma] is linear in the control
measure, so its infimum over measures on the action grid is attained on
atoms; ties within a tolerance are resolved by uniform mixing, which is what
lets a zero-diffusion fixed point sit on a genuinely mixed measure.

msa_solve iterates the coupled system to a fixed point: simulate forward,
differentiate the risk at the cost law, solve the two backward regressions,
minimize H pointwise at every (path, step), fit the minimizers back into a
feedback policy, and damp the update.  The Brownian driver is frozen across
iterations (common random numbers) so the objective trace is comparable
between iterations.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .adjoint import (
    _slice_regressions,
    martingale_diagnostics,
    solve_adjoint_system,
)
from .risk import EmpiricalSample, bootstrap_standard_error, evaluate, l_derivative
from .sde import (
    MeasurePolicy,
    _eval_affine_batch,
    convex_combine,
    simulate_forward,
    total_cost,
)

__all__ = [
    "HamiltonianContext",
    "MsaConfig",
    "SolveReport",
    "hamiltonian",
    "minimize_hamiltonian",
    "objective",
    "msa_solve",
]


@dataclass(frozen=True)
class HamiltonianContext:
    """Arguments of the Hamiltonian at one (time, path) point."""

    t: float
    x: np.ndarray        # (dim_x,)
    y: np.ndarray        # (dim_x,) row covector
    yprime: float
    z: np.ndarray        # (dim_w, dim_x)


def _hamiltonian_atoms(model, t, states, y, yprime, z):
    """H at every action atom; shapes (n, dim_x), (n,), (n, dim_w, dim_x)."""
    n = states.shape[0]
    dx, dw = model.dim_x, model.dim_w
    n_atoms = model.n_atoms
    b_tab = np.empty((n_atoms, n, dx))
    c_tab = np.empty((n_atoms, n))
    s_tab = np.empty((n_atoms, n, dx, dw))
    for j in range(n_atoms):
        a = model.action_grid[j]
        b_tab[j] = np.asarray(model.drift(t, states, a), float)
        c_tab[j] = np.asarray(model.cost(t, states, a), float)
        s_tab[j] = np.asarray(model.diffusion(t, states, a), float)
    out = np.einsum("ni,jni->nj", y, b_tab)
    out += yprime[:, None] * c_tab.T
    out += np.einsum("nwi,jniw->nj", z, s_tab)
    return out


def hamiltonian(ctx, a, model):
    """H(t, x, y, y', z, a) = y.b + y'.c + tr[z sigma] at a single point."""
    x = np.asarray(ctx.x, float)[None, :]
    y = np.asarray(ctx.y, float)[None, :]
    z = np.asarray(ctx.z, float)[None, :, :]
    j = _atom_index(model, a)
    table = _hamiltonian_atoms(model, ctx.t, x, y, np.array([ctx.yprime]), z)
    return float(table[0, j])


def _atom_index(model, a):
    a = np.atleast_1d(np.asarray(a, float))
    match = np.all(model.action_grid == a[None, :], axis=1)
    idx = np.flatnonzero(match)
    if idx.size == 0:
        raise ValueError(f"action {a} is not on the model's action grid")
    return int(idx[0])


def _near_min_weights(table, eta):
    """Uniform mixture over atoms within eta * (1 + |H_min|) of the minimum."""
    hmin = table.min(axis=1)
    thresh = hmin + eta * (1.0 + np.abs(hmin))
    mask = table <= thresh[:, None]
    return mask / mask.sum(axis=1, keepdims=True)


def minimize_hamiltonian(ctx, model, eta):
    """Minimizing measure of H over the action grid at one point.

    Linearity in the measure puts the infimum on atoms; all atoms within the
    (relative) tie tolerance eta of the minimum share weight uniformly, so a
    symmetric tie returns the mixed measure rather than an arbitrary atom.

    Returns:
      weight vector over model.action_grid.
    """
    x = np.asarray(ctx.x, float)[None, :]
    y = np.asarray(ctx.y, float)[None, :]
    z = np.asarray(ctx.z, float)[None, :, :]
    table = _hamiltonian_atoms(model, ctx.t, x, y, np.array([ctx.yprime]), z)
    return _near_min_weights(table, eta)[0]


def objective(model, risk, policy, driver, grid):
    """Risk of the total-cost sample from a fresh forward simulation."""
    ens = simulate_forward(model, policy, driver, grid)
    return evaluate(risk, EmpiricalSample(total_cost(ens, model)))


@dataclass(frozen=True)
class MsaConfig:
    """Iteration controls for msa_solve.

    The damping schedule is alpha_k = damping_base / (1 + k / damping_scale),
    nonincreasing in k.  eta is the relative Hamiltonian tie tolerance, tol
    the convergence threshold on the objective change, and seed drives the
    bootstrap standard errors recorded in the report.
    """

    max_iters: int = 30
    damping_base: float = 0.5
    damping_scale: float = 10.0
    eta: float = 1e-9
    tol: float = 1e-5
    n_boot: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (0.0 < self.damping_base <= 1.0) or self.damping_scale <= 0.0:
            raise ValueError("damping schedule must start in (0, 1] and decay")
        if self.eta <= 0.0 or self.tol < 0.0:
            raise ValueError("eta must be > 0 and tol >= 0")

    def alpha(self, k):
        return self.damping_base / (1.0 + k / self.damping_scale)


@dataclass
class SolveReport:
    """Per-iteration trace of the solver; all arrays share one length."""

    objectives: list = field(default_factory=list)
    objective_ses: list = field(default_factory=list)
    hamiltonian_gaps: list = field(default_factory=list)
    policy_changes: list = field(default_factory=list)
    policy_entropies: list = field(default_factory=list)
    martingale_max_drifts: list = field(default_factory=list)
    converged: bool = False
    max_iters_exceeded: bool = False
    best_iter: int = 0
    non_monotone_iters: list = field(default_factory=list)

    @property
    def n_iters(self):
        return len(self.objectives)


class FittedPolicy(MeasurePolicy):
    """Feedback policy from per-step regressions of near-minimal weights.

    Each step stores an affine map from raw state features to pre-weights;
    evaluation clips negatives and renormalizes, falling back to uniform on
    rows whose fitted mass vanishes.
    """

    def __init__(self, steps, basis, n_atoms):
        self.steps = steps  # list of (intercept (A,), coef (m, A))
        self.basis = basis
        self.n_atoms = n_atoms

    def weights_at(self, k, t, states):
        intercept, coef = self.steps[k]
        return _eval_affine_batch(
            self.basis, states, [1.0], [intercept], [coef], self.n_atoms
        )

    def _affine_step(self, k):
        intercept, coef = self.steps[k]
        return self.basis, intercept, coef


def _fitted_or_constant(fitted_steps, basis, n_atoms):
    """Degrade a state-independent fit to a constant policy.

    When every regression coefficient is exactly zero (the pointwise
    minimizers did not depend on the state) the fitted feedback law is a
    per-step constant, and constant policies mix into constants, keeping the
    solver's policy representation flat.
    """
    if all(not coef.any() for _, coef in fitted_steps):
        rows = np.stack([intercept for intercept, _ in fitted_steps])
        np.clip(rows, 0.0, None, out=rows)
        rows /= rows.sum(axis=1, keepdims=True)
        return MeasurePolicy.constant(rows)
    return FittedPolicy(fitted_steps, basis, n_atoms)


def msa_solve(model, risk, init, cfg, driver, basis, grid):
    """Damped successive approximation of the coupled optimality system.

    Each iteration simulates under the current policy, evaluates the risk and
    its derivative at the empirical cost law, solves the backward regressions
    for (y', z') and (y, z), minimizes the Hamiltonian at every (path, step),
    fits the minimizing weights into a feedback policy q*, and updates
    pi <- (1 - alpha_k) pi + alpha_k q*.  Stops when the objective change
    drops below cfg.tol or after cfg.max_iters iterations, returning the
    best-seen policy in the latter case (flagged in the report).

    Returns:
      (policy, SolveReport)
    """
    report = SolveReport()
    policy = init
    best_obj = math.inf
    best_policy = init
    n_steps = grid.n_steps

    for it in range(cfg.max_iters):
        ens = simulate_forward(model, policy, driver, grid, keep_weights=True)
        costs = total_cost(ens, model)
        sample = EmpiricalSample(costs)
        obj = evaluate(risk, sample)
        se = bootstrap_standard_error(risk, sample, cfg.n_boot, cfg.seed)
        deriv = l_derivative(risk, sample)
        slices = _slice_regressions(ens, basis)
        adj = solve_adjoint_system(model, ens, deriv, basis, slices)
        mart = martingale_diagnostics(adj.yprime)

        gap_sum = 0.0
        change_sum = 0.0
        entropy_sum = 0.0
        fitted_steps = []
        for k in range(n_steps):
            t = grid.nodes[k]
            xk = ens.states[:, k]
            table = _hamiltonian_atoms(
                model, t, xk, adj.y[:, k], adj.yprime[:, k], adj.z[:, k]
            )
            wstar = _near_min_weights(table, cfg.eta)
            wpi = ens.policy_weights[k]
            gap_sum += float(
                np.mean(np.einsum("na,na->n", wpi, table) - table.min(axis=1))
            )
            change_sum += float(np.mean(np.abs(wstar - wpi)))
            with np.errstate(divide="ignore", invalid="ignore"):
                logw = np.where(wpi > 0.0, np.log(np.maximum(wpi, 1e-300)), 0.0)
            entropy_sum += float(np.mean(-(wpi * logw).sum(axis=1)))
            _, intercept, coef = slices[k].fit(wstar)
            fitted_steps.append((intercept, coef))

        report.objectives.append(obj)
        report.objective_ses.append(se)
        report.hamiltonian_gaps.append(gap_sum / n_steps)
        report.policy_changes.append(change_sum / n_steps)
        report.policy_entropies.append(entropy_sum / n_steps)
        report.martingale_max_drifts.append(mart.max_drift)

        if obj < best_obj:
            best_obj = obj
            best_policy = policy
            report.best_iter = it
        if it > 0:
            prev = report.objectives[it - 1]
            prev_se = report.objective_ses[it - 1]
            if obj > prev + 2.0 * prev_se:
                report.non_monotone_iters.append(it)
            if abs(obj - prev) < cfg.tol:
                report.converged = True
                return policy, report

        qstar = _fitted_or_constant(fitted_steps, basis, model.n_atoms)
        policy = convex_combine(policy, qstar, cfg.alpha(it))

    report.max_iters_exceeded = True
    return best_policy, report
