"""Regression Monte Carlo estimators for the adjoint system.

Conditional expectations given the time-k state are realized as global
polynomial least squares across paths (Longstaff-Schwartz style), one design
matrix per time slice shared by every regression target at that slice.  The
backward recursions estimate

  y'_k  by regressing the terminal derivative values D directly on the slice,
  z'_k  by projecting the centered martingale increment (D - y'_k) dW_k / dt,
  y_k   by backward Euler with an explicit state-gradient Hamiltonian term,
  z_k   by projecting (y_{k+1} - E[y_{k+1} | x_k]) (x) dW_k / dt.

Centering the increment targets is what makes the risk-neutral case collapse
exactly: constant D fits with zero residual, so z' vanishes identically
instead of inheriting O(1/sqrt(n dt)) regression noise.

Normal matrices are accumulated with fixed-order einsum contractions, so
results do not depend on BLAS thread count.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalBlowup, RankDeficient

__all__ = [
    "RegressionBasis",
    "ConditionalFit",
    "AdjointProcesses",
    "MartingaleReport",
    "fit_conditional",
    "solve_risk_adjustment",
    "solve_adjoint",
    "solve_adjoint_system",
    "martingale_diagnostics",
]


@dataclass(frozen=True)
class RegressionBasis:
    """Polynomial regression basis with per-sample ridge scaling.

    degree is the total polynomial degree of the state monomials (degree 0
    keeps only the intercept).  The effective ridge penalty on standardized,
    non-intercept coefficients is ridge * n_samples; ridge = 0 requests plain
    least squares and raises RankDeficient on singular normal systems.
    feature_map optionally replaces the monomials with a custom map
    states -> (n, m).
    """

    degree: int = 3
    ridge: float = 1e-8
    feature_map: "callable | None" = None

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.ridge < 0.0:
            raise ValueError("ridge must be >= 0")

    def design(self, states):
        """Non-constant feature columns for states of shape (n, dim_x)."""
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if self.feature_map is not None:
            phi = np.asarray(self.feature_map(states), dtype=float)
            if phi.ndim != 2 or phi.shape[0] != states.shape[0]:
                raise ValueError("feature_map must return shape (n, m)")
            return phi
        n, d = states.shape
        cols = []
        for total in range(1, self.degree + 1):
            for expo in itertools.combinations_with_replacement(range(d), total):
                col = np.ones(n)
                for idx in expo:
                    col = col * states[:, idx]
                cols.append(col)
        if not cols:
            return np.empty((n, 0))
        return np.stack(cols, axis=1)


class _SliceRegression:
    """Shared least-squares factorization for one time slice."""

    def __init__(self, states, basis):
        phi = basis.design(states)
        n, m = phi.shape
        self.n = n
        self.m = m
        if m == 0:
            return
        mu = phi.mean(axis=0)
        centered = phi - mu
        scale = centered.std(axis=0)
        scale[scale < 1e-300] = 1.0
        centered /= scale
        gram = np.einsum("ni,nj->ij", centered, centered)
        lam = basis.ridge * n
        if lam == 0.0 and np.linalg.matrix_rank(gram) < m:
            raise RankDeficient(
                f"normal system is singular ({m} features, rank deficient)"
            )
        self._solve_mat = gram + lam * np.eye(m)
        self._phi_centered = centered
        self._mu = mu
        self._scale = scale

    def fit(self, targets):
        """Least squares of targets on the slice features.

        targets: (n,) or (n, r).  Returns (fitted, intercept, coef) where
        coef maps *raw* design columns, standardization already absorbed.
        """
        t = np.asarray(targets, dtype=float)
        squeeze = t.ndim == 1
        if squeeze:
            t = t[:, None]
        ybar = t.mean(axis=0)
        if self.m == 0:
            fitted = np.broadcast_to(ybar, t.shape).copy()
            coef = np.empty((0, t.shape[1]))
            intercept = ybar
        else:
            rhs = np.einsum("ni,nr->ir", self._phi_centered, t - ybar)
            beta = np.linalg.solve(self._solve_mat, rhs)
            fitted = ybar + self._phi_centered @ beta
            coef = beta / self._scale[:, None]
            intercept = ybar - self._mu @ coef
        if squeeze:
            return fitted[:, 0], intercept, coef
        return fitted, intercept, coef


@dataclass(frozen=True)
class ConditionalFit:
    """Fitted conditional-expectation predictor plus fit diagnostics."""

    predict: callable
    fitted: np.ndarray
    intercept: np.ndarray
    coefficients: np.ndarray
    residual: float
    residual_rel: float


def fit_conditional(basis, states, targets):
    """Weighted least squares of per-path targets on state features.

    Returns a ConditionalFit whose predict callable evaluates the fitted
    conditional expectation at new states.  Raises RankDeficient when
    basis.ridge == 0 and the normal system is singular.
    """
    reg = _SliceRegression(states, basis)
    fitted, intercept, coef = reg.fit(targets)
    t = np.asarray(targets, dtype=float)
    resid = float(np.linalg.norm(t - fitted))
    denom = float(np.linalg.norm(t))
    rel = resid / denom if denom > 0.0 else resid
    single = t.ndim == 1

    def predict(new_states):
        phi = basis.design(new_states)
        if single:
            out = np.full(phi.shape[0], float(intercept[0]))
            if phi.shape[1]:
                out = out + phi @ coef[:, 0]
            return out
        out = np.tile(intercept, (phi.shape[0], 1))
        if phi.shape[1]:
            out = out + phi @ coef
        return out

    return ConditionalFit(
        predict=predict,
        fitted=fitted,
        intercept=intercept,
        coefficients=coef,
        residual=resid,
        residual_rel=rel,
    )


def _slice_regressions(ensemble, basis):
    """One shared least-squares factorization per interior time slice."""
    return [
        _SliceRegression(ensemble.states[:, k], basis)
        for k in range(ensemble.grid.n_steps)
    ]


def solve_risk_adjustment(ensemble, derivative_values, basis, slices=None):
    """Backward estimate of the risk-adjustment pair (y', z').

    y'_T is pinned to the per-path derivative values; earlier slices regress
    those terminal values directly on the slice state (the conditional-mean
    estimator of the martingale), and z' projects the centered increment
    (D - y'_k) dW_k / dt on the same features.  slices optionally reuses
    precomputed per-step regressions.

    Returns:
      (yprime, zprime, residuals): shapes (n, K+1), (n, K, dim_w) and a
      per-step list of y'-regression residuals.
    """
    d = np.asarray(derivative_values, dtype=float).reshape(-1)
    n = ensemble.n_paths
    if d.shape != (n,):
        raise ValueError("derivative values must be one scalar per path")
    grid = ensemble.grid
    dw = ensemble.driver.increments
    n_steps, dim_w = grid.n_steps, ensemble.driver.dim_w
    dt = grid.dt
    if slices is None:
        slices = _slice_regressions(ensemble, basis)

    yprime = np.empty((n, n_steps + 1))
    zprime = np.zeros((n, n_steps, dim_w))
    yprime[:, n_steps] = d
    residuals = [0.0] * n_steps
    for k in range(n_steps - 1, -1, -1):
        reg = slices[k]
        fitted, _, _ = reg.fit(d)
        yprime[:, k] = fitted
        residuals[k] = float(np.linalg.norm(d - fitted) / math.sqrt(n))
        # Martingale increment between fitted slices; using the fitted
        # (k+1)-values rather than raw D strips the future-noise spread from
        # the projection target, without which z' carries O(1/sqrt(n dt))
        # noise that would drown the estimate.
        increment_proj = (yprime[:, k + 1] - fitted)[:, None] * dw[:, k] / dt
        zprime[:, k], _, _ = reg.fit(increment_proj)
    return yprime, zprime, residuals


def _policy_grad_hamiltonian(model, t, states, y, yprime_k, z, weights):
    """Gradient of the measure-averaged Hamiltonian with respect to the state."""
    n, dx = states.shape
    grad = np.zeros((n, dx))
    active = np.flatnonzero(weights.max(axis=0) > 0.0)
    for j in active:
        a = model.action_grid[j]
        wj = weights[:, j]
        term = None
        db = np.broadcast_to(
            np.asarray(model.drift_dx(t, states, a), float), (n, dx, dx)
        )
        if db.any():
            term = np.einsum("ni,nil->nl", y, db)
        dc = np.broadcast_to(
            np.asarray(model.cost_dx(t, states, a), float), (n, dx)
        )
        if dc.any():
            part = yprime_k[:, None] * dc
            term = part if term is None else term + part
        ds = np.broadcast_to(
            np.asarray(model.diffusion_dx(t, states, a), float),
            (n, dx, model.dim_w, dx),
        )
        if ds.any():
            part = np.einsum("nwi,niwl->nl", z, ds)
            term = part if term is None else term + part
        if term is not None:
            grad += wj[:, None] * term
    return grad


def solve_adjoint(model, ensemble, yprime, policy, basis, slices=None):
    """Backward regression solve of the adjoint pair (y, z).

    Terminal condition y_T = y'_T * grad g(x_T); going backward, z_k projects
    the centered increment of y on dW_k / dt and y_k adds the explicit
    state-gradient Hamiltonian drift to the conditional mean of y_{k+1}.
    slices optionally reuses precomputed per-step regressions.

    Returns:
      (y, z, residuals): shapes (n, K+1, dim_x), (n, K, dim_w, dim_x) and a
      per-step list of y-regression residuals.
    """
    grid = ensemble.grid
    n = ensemble.n_paths
    n_steps, dx, dim_w = grid.n_steps, model.dim_x, model.dim_w
    dt = grid.dt
    dw = ensemble.driver.increments
    if slices is None:
        slices = _slice_regressions(ensemble, basis)

    y = np.empty((n, n_steps + 1, dx))
    z = np.zeros((n, n_steps, dim_w, dx))
    g_grad = np.broadcast_to(
        np.asarray(model.terminal_dx(ensemble.states[:, -1]), float), (n, dx)
    )
    y[:, n_steps] = yprime[:, n_steps, None] * g_grad
    residuals = [0.0] * n_steps

    for k in range(n_steps - 1, -1, -1):
        t = grid.nodes[k]
        xk = ensemble.states[:, k]
        reg = slices[k]
        yhat, _, _ = reg.fit(y[:, k + 1])
        residuals[k] = float(
            np.linalg.norm(y[:, k + 1] - yhat) / math.sqrt(n)
        )
        centered = y[:, k + 1] - yhat
        ztarget = (centered[:, None, :] * dw[:, k, :, None] / dt).reshape(
            n, dim_w * dx
        )
        zfit, _, _ = reg.fit(ztarget)
        z[:, k] = zfit.reshape(n, dim_w, dx)
        if ensemble.policy_weights is not None and policy is ensemble.policy:
            w = ensemble.policy_weights[k]
        else:
            w = policy.weights_at(k, t, xk)
        grad_h = _policy_grad_hamiltonian(
            model, t, xk, yhat, yprime[:, k], z[:, k], w
        )
        y[:, k] = yhat + grad_h * dt
        if not np.isfinite(y[:, k]).all():
            raise NumericalBlowup(k, "adjoint state")
    return y, z, residuals


@dataclass(frozen=True)
class AdjointProcesses:
    """Per-step, per-path adjoint estimates and regression diagnostics."""

    y: np.ndarray         # (n, K+1, dim_x), row-covector per path/step
    z: np.ndarray         # (n, K, dim_w, dim_x)
    yprime: np.ndarray    # (n, K+1)
    zprime: np.ndarray    # (n, K, dim_w)
    residuals_y: list
    residuals_yprime: list


def solve_adjoint_system(model, ensemble, derivative_values, basis, slices=None):
    """Run both backward solves and package the four adjoint processes."""
    if slices is None:
        slices = _slice_regressions(ensemble, basis)
    yprime, zprime, res_p = solve_risk_adjustment(
        ensemble, derivative_values, basis, slices
    )
    y, z, res_y = solve_adjoint(
        model, ensemble, yprime, ensemble.policy, basis, slices
    )
    return AdjointProcesses(
        y=y,
        z=z,
        yprime=yprime,
        zprime=zprime,
        residuals_y=res_y,
        residuals_yprime=res_p,
    )


@dataclass(frozen=True)
class MartingaleReport:
    """Per-step drift of the y' process against its terminal mean."""

    drift: np.ndarray
    standard_error: np.ndarray
    within_3se: np.ndarray
    insufficient_sample: bool

    @property
    def max_drift(self):
        return float(np.max(self.drift))


def martingale_diagnostics(yprime):
    """Check that cross-path means of y' stay flat in time.

    A driftless y' has E[y'_k] equal to E[y'_T] at every step; the report
    carries |mean_k(y') - mean(D)| together with the Monte Carlo standard
    error of that difference.  A single path has no standard error and is
    flagged as an insufficient sample.
    """
    yprime = np.asarray(yprime, dtype=float)
    n, _ = yprime.shape
    diffs = yprime - yprime[:, -1][:, None]
    drift = np.abs(diffs.mean(axis=0))
    if n < 2:
        se = np.full(yprime.shape[1], np.nan)
        return MartingaleReport(
            drift=drift,
            standard_error=se,
            within_3se=np.zeros(yprime.shape[1], dtype=bool),
            insufficient_sample=True,
        )
    se = diffs.std(axis=0, ddof=1) / math.sqrt(n)
    return MartingaleReport(
        drift=drift,
        standard_error=se,
        within_3se=drift <= 3.0 * se + 1e-15,
        insufficient_sample=False,
    )
