"""Forward simulation of measure-controlled SDEs on a uniform time grid.

The state equation is integrated with explicit Euler-Maruyama where the drift,
diffusion and cost-rate coefficients are first averaged against the control
measure and only then applied to dt and dW (the measure enters *inside* the
stochastic integral, so a half/half mixture of +1 and -1 volatility is exactly
zero noise, not root-mean-square noise).  Running costs accumulate with the
left-endpoint rule into an auxiliary scalar path.

All per-path randomness comes from counter-based Philox streams keyed by
(seed, path index): path i of a driver is bit-identical no matter how many
paths are requested, and every simulation is deterministic for a fixed seed
and independent of thread count (reductions are fixed-order numpy ops).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlphaOutOfRange,
    NonPositiveHorizon,
    NumericalBlowup,
    ZeroSteps,
)

__all__ = [
    "TimeGrid",
    "ModelSpec",
    "FeasibilityConfig",
    "FeasibilityReport",
    "BrownianDriver",
    "MeasurePolicy",
    "PathEnsemble",
    "build_time_grid",
    "sample_brownian",
    "simulate_forward",
    "total_cost",
    "convex_combine",
    "simulate_variational",
    "check_feasibility",
    "validate_gradients",
    "dirac_initial",
]

# Stream id reserved for drawing initial states; unreachable as a path index.
_INITIAL_STREAM = (1 << 64) - 1

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, horizon] into n_steps intervals."""

    horizon: float
    n_steps: int
    nodes: np.ndarray

    @property
    def dt(self):
        return self.horizon / self.n_steps


def build_time_grid(horizon, n_steps):
    """Return a uniform TimeGrid with n_steps+1 nodes covering [0, horizon]."""
    if not math.isfinite(horizon) or horizon <= 0.0:
        raise NonPositiveHorizon(f"horizon must be > 0, got {horizon}")
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ZeroSteps(f"n_steps must be >= 1, got {n_steps}")
    nodes = np.linspace(0.0, float(horizon), n_steps + 1)
    return TimeGrid(horizon=float(horizon), n_steps=n_steps, nodes=nodes)


def dirac_initial(x0):
    """Initial-law sampler for a point mass at x0."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def sampler(rng, n):
        return np.tile(x0, (n, 1))

    return sampler


@dataclass(frozen=True)
class ModelSpec:
    """Problem data: coefficient maps, their state gradients, and metadata.

    Coefficient maps are vectorized over paths.  For states x of shape
    (n, dim_x) and a single action atom a of shape (dim_a,):

        drift(t, x, a)        -> broadcastable to (n, dim_x)
        diffusion(t, x, a)    -> broadcastable to (n, dim_x, dim_w)
        cost(t, x, a)         -> broadcastable to (n,)
        terminal(x)           -> broadcastable to (n,)
        drift_dx(t, x, a)     -> (n, dim_x, dim_x),  [i, l] = d b_i / d x_l
        diffusion_dx(t, x, a) -> (n, dim_x, dim_w, dim_x)
        cost_dx(t, x, a)      -> (n, dim_x)
        terminal_dx(x)        -> (n, dim_x)
        initial(rng, n)       -> (n, dim_x)

    action_grid holds the finite set of atoms, shape (n_atoms, dim_a);
    measure-valued policies place weights on these atoms.  growth carries the
    integrability exponents used by check_feasibility, when known.
    """

    dim_x: int
    dim_w: int
    dim_a: int
    drift: callable
    diffusion: callable
    cost: callable
    terminal: callable
    drift_dx: callable
    diffusion_dx: callable
    cost_dx: callable
    terminal_dx: callable
    initial: callable
    action_grid: np.ndarray
    growth: "FeasibilityConfig | None" = None

    def __post_init__(self):
        grid = np.asarray(self.action_grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        if grid.ndim != 2 or grid.shape[1] != self.dim_a or grid.shape[0] < 1:
            raise ValueError(
                f"action_grid must have shape (n_atoms, {self.dim_a})"
            )
        object.__setattr__(self, "action_grid", grid)

    @property
    def n_atoms(self):
        return self.action_grid.shape[0]


def _coef(fn, t, x, a, shape):
    out = np.asarray(fn(t, x, a), dtype=float)
    return np.broadcast_to(out, shape)


@dataclass(frozen=True)
class BrownianDriver:
    """Gaussian increments on a grid, one Philox stream per path.

    increments[i, k, j] ~ N(0, dt) is drawn from the stream keyed by
    (seed, i); regenerating with the same seed reproduces the array
    bit-exactly and path i does not depend on n_paths.
    """

    increments: np.ndarray
    seed: int
    stream_ids: np.ndarray

    @property
    def n_paths(self):
        return self.increments.shape[0]

    @property
    def n_steps(self):
        return self.increments.shape[1]

    @property
    def dim_w(self):
        return self.increments.shape[2]


def _path_stream(seed, stream_id):
    key = ((int(seed) % (1 << 64)) << 64) | (int(stream_id) % (1 << 64))
    return np.random.Generator(np.random.Philox(key=key))


def sample_brownian(grid, n_paths, dim_w, seed):
    """Draw Brownian increments for n_paths paths on the given grid.

    Args:
      grid: TimeGrid fixing n_steps and dt.
      n_paths: number of paths, >= 1.
      dim_w: driving Brownian dimension.
      seed: 64-bit integer; the only entropy source.

    Returns:
      BrownianDriver with increments of shape (n_paths, n_steps, dim_w).
    """
    n_paths = int(n_paths)
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    out = np.empty((n_paths, grid.n_steps, int(dim_w)))
    for i in range(n_paths):
        gen = _path_stream(seed, i)
        out[i] = gen.standard_normal((grid.n_steps, int(dim_w)))
    out *= math.sqrt(grid.dt)
    return BrownianDriver(
        increments=out,
        seed=int(seed),
        stream_ids=np.arange(n_paths, dtype=np.uint64),
    )


class MeasurePolicy:
    """A measure-valued feedback control on a finite action grid.

    Per time index k, weights_at maps the state array to nonnegative atom
    weights summing to one.  Policies are immutable once built; convex
    combinations are flat mixtures evaluated lazily.
    """

    n_atoms: int

    def weights_at(self, k, t, states):
        raise NotImplementedError

    @staticmethod
    def constant(weights, n_atoms=None):
        """State-independent weights; one row per step or a single row."""
        return _ConstantPolicy(weights)

    @staticmethod
    def dirac(atom_index, n_atoms):
        w = np.zeros(n_atoms)
        w[atom_index] = 1.0
        return _ConstantPolicy(w)

    @staticmethod
    def uniform(n_atoms):
        return _ConstantPolicy(np.full(n_atoms, 1.0 / n_atoms))

    @staticmethod
    def feedback(rule, n_atoms):
        """Wrap rule(k, t, states) -> (n, n_atoms) as a policy."""
        return _RulePolicy(rule, n_atoms)


def _check_weight_rows(w, where):
    if np.any(w < 0.0):
        raise ValueError(f"negative policy weight at {where}")
    sums = w.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > _WEIGHT_TOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"policy weights at {where} sum off by {worst:.2e}")


class _ConstantPolicy(MeasurePolicy):
    def __init__(self, weights):
        w = np.atleast_2d(np.asarray(weights, dtype=float))
        _check_weight_rows(w, "constant policy")
        self.weights = w
        self.n_atoms = w.shape[1]

    def weights_at(self, k, t, states):
        row = self.weights[k] if self.weights.shape[0] > 1 else self.weights[0]
        return np.broadcast_to(row, (states.shape[0], self.n_atoms))


class _RulePolicy(MeasurePolicy):
    def __init__(self, rule, n_atoms):
        self.rule = rule
        self.n_atoms = n_atoms

    def weights_at(self, k, t, states):
        w = np.asarray(self.rule(k, t, states), dtype=float)
        w = np.broadcast_to(w, (states.shape[0], self.n_atoms))
        _check_weight_rows(w, f"feedback policy, step {k}")
        return w


def _eval_affine_batch(basis, states, scales, intercepts, coefs, n_atoms):
    """Evaluate a batch of clipped-affine weight maps in one design pass.

    Each component maps raw features to pre-weights via (intercept, coef),
    then clips negatives and renormalizes per path (uniform fallback on
    vanished rows); the batch shares the feature matrix and a single matmul.
    """
    phi = basis.design(states)
    n = states.shape[0]
    n_comp = len(scales)
    raw = np.tile(np.concatenate(intercepts), (n, 1))
    if phi.shape[1]:
        raw += phi @ np.concatenate(coefs, axis=1)
    raw = raw.reshape(n, n_comp, n_atoms)
    np.clip(raw, 0.0, None, out=raw)
    mass = raw.sum(axis=2, keepdims=True)
    empty = mass[:, :, 0] <= 1e-300
    if empty.any():
        raw[empty] = 1.0
        mass = raw.sum(axis=2, keepdims=True)
    raw /= mass
    return np.einsum("c,nca->na", np.asarray(scales, dtype=float), raw)


class _MixturePolicy(MeasurePolicy):
    """Flat convex mixture of component policies.

    Components exposing an affine step representation (fitted feedback
    policies) are stacked into one shared design pass per call, keeping
    evaluation cost flat as the mixture grows.
    """

    def __init__(self, components):
        self.components = components
        self.n_atoms = components[0][1].n_atoms

    def weights_at(self, k, t, states):
        out = None
        batches = {}
        for scale, comp in self.components:
            probe = getattr(comp, "_affine_step", None)
            if probe is not None:
                basis, intercept, coef = probe(k)
                entry = batches.setdefault(id(basis), (basis, [], [], []))
                entry[1].append(scale)
                entry[2].append(intercept)
                entry[3].append(coef)
            else:
                w = scale * comp.weights_at(k, t, states)
                out = w if out is None else out + w
        for basis, scales, intercepts, coefs in batches.values():
            w = _eval_affine_batch(
                basis, states, scales, intercepts, coefs, self.n_atoms
            )
            out = w if out is None else out + w
        return out


def _mixture_terms(policy, scale):
    if isinstance(policy, _MixturePolicy):
        return [(scale * s, c) for s, c in policy.components]
    return [(scale, policy)]


def convex_combine(pi, q, alpha):
    """Return the policy with weights (1 - alpha) * pi + alpha * q per step/state."""
    if not (0.0 <= alpha <= 1.0):
        raise AlphaOutOfRange(f"alpha must be in [0, 1], got {alpha}")
    if pi.n_atoms != q.n_atoms:
        raise ValueError("policies live on different action grids")
    if alpha == 0.0:
        return pi
    if alpha == 1.0:
        return q
    if isinstance(pi, _ConstantPolicy) and isinstance(q, _ConstantPolicy):
        rows = max(pi.weights.shape[0], q.weights.shape[0])
        wp = np.broadcast_to(pi.weights, (rows, pi.n_atoms))
        wq = np.broadcast_to(q.weights, (rows, q.n_atoms))
        return _ConstantPolicy((1.0 - alpha) * wp + alpha * wq)
    terms = _mixture_terms(pi, 1.0 - alpha) + _mixture_terms(q, alpha)
    return _MixturePolicy(terms)


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated forward system: states, running costs, and their inputs.

    policy_weights optionally carries the per-step weight arrays evaluated
    during simulation, so downstream passes over the same states need not
    re-evaluate the policy.
    """

    states: np.ndarray        # (n_paths, n_steps + 1, dim_x)
    running_cost: np.ndarray  # (n_paths, n_steps + 1)
    grid: TimeGrid
    driver: BrownianDriver
    policy: MeasurePolicy
    policy_weights: "tuple | None" = None

    @property
    def n_paths(self):
        return self.states.shape[0]


def _averaged_coefficients(model, t, x, weights, need_cost=True):
    """Measure-average drift/diffusion/cost over atoms with nonzero weight."""
    n = x.shape[0]
    bbar = np.zeros((n, model.dim_x))
    sbar = np.zeros((n, model.dim_x, model.dim_w))
    cbar = np.zeros(n) if need_cost else None
    active = np.flatnonzero(weights.max(axis=0) > 0.0)
    for j in active:
        a = model.action_grid[j]
        wj = weights[:, j]
        bbar += wj[:, None] * _coef(model.drift, t, x, a, (n, model.dim_x))
        sbar += wj[:, None, None] * _coef(
            model.diffusion, t, x, a, (n, model.dim_x, model.dim_w)
        )
        if need_cost:
            cbar += wj * _coef(model.cost, t, x, a, (n,))
    return bbar, sbar, cbar


def simulate_forward(model, policy, driver, grid, keep_weights=False):
    """Euler-Maruyama integration of the measure-controlled state equation.

    Per step the update is
        x_{k+1} = x_k + [sum_a w_a b(t_k, x_k, a)] dt
                      + [sum_a w_a sigma(t_k, x_k, a)] dW_k,
    i.e. coefficients are averaged against the step's measure before touching
    the increments, and the running cost accumulates sum_a w_a c(t_k, x_k, a) dt
    with the left-endpoint rule.  keep_weights stores the evaluated per-step
    weight arrays on the returned ensemble.

    Raises:
      NumericalBlowup: if any path hits a NaN/Inf state or cost.
    """
    if driver.n_steps != grid.n_steps:
        raise ValueError("driver and grid disagree on n_steps")
    if driver.dim_w != model.dim_w:
        raise ValueError("driver and model disagree on dim_w")
    if policy.n_atoms != model.n_atoms:
        raise ValueError("policy and model disagree on the action grid")

    n = driver.n_paths
    dt = grid.dt
    x = np.empty((n, grid.n_steps + 1, model.dim_x))
    xp = np.zeros((n, grid.n_steps + 1))
    x[:, 0] = model.initial(_path_stream(driver.seed, _INITIAL_STREAM), n)
    if not np.isfinite(x[:, 0]).all():
        raise NumericalBlowup(0, "initial state")

    kept = [] if keep_weights else None
    for k in range(grid.n_steps):
        t = grid.nodes[k]
        xk = x[:, k]
        w = policy.weights_at(k, t, xk)
        _check_weight_rows(w, f"step {k}")
        if keep_weights:
            kept.append(w)
        bbar, sbar, cbar = _averaged_coefficients(model, t, xk, w)
        x[:, k + 1] = (
            xk
            + bbar * dt
            + np.einsum("nij,nj->ni", sbar, driver.increments[:, k])
        )
        xp[:, k + 1] = xp[:, k] + cbar * dt
        if not np.isfinite(x[:, k + 1]).all():
            raise NumericalBlowup(k + 1, "state")
        if not np.isfinite(xp[:, k + 1]).all():
            raise NumericalBlowup(k + 1, "running cost")

    return PathEnsemble(
        states=x,
        running_cost=xp,
        grid=grid,
        driver=driver,
        policy=policy,
        policy_weights=tuple(kept) if keep_weights else None,
    )


def total_cost(ensemble, model):
    """Per-path total cost: terminal running cost plus terminal state cost."""
    xT = ensemble.states[:, -1]
    g = np.broadcast_to(
        np.asarray(model.terminal(xT), dtype=float), (ensemble.n_paths,)
    )
    return ensemble.running_cost[:, -1] + g


def simulate_variational(model, ensemble, q):
    """First-order response of the paths to blending the control toward q.

    Integrates, on the ensemble's own Brownian increments, the linearized
    system driven by the coefficient differences between q and the ensemble's
    policy pi:

        d delta = [Db(t, x, pi) delta + b(t, x, q - pi)] dt
                + [Dsigma(t, x, pi) delta + sigma(t, x, q - pi)] dW,
        d delta' = [Dc(t, x, pi) . delta + c(t, x, q - pi)] dt,

    with delta_0 = 0, delta'_0 = 0, where D* are the state Jacobians averaged
    under pi and f(q - pi) means the weight-difference average of f.

    Returns:
      (delta, delta_prime) of shapes (n, n_steps + 1, dim_x) and (n, n_steps + 1).
    """
    grid = ensemble.grid
    pi = ensemble.policy
    driver = ensemble.driver
    n = ensemble.n_paths
    dt = grid.dt
    dx, dw = model.dim_x, model.dim_w

    delta = np.zeros((n, grid.n_steps + 1, dx))
    delta_p = np.zeros((n, grid.n_steps + 1))

    for k in range(grid.n_steps):
        t = grid.nodes[k]
        xk = ensemble.states[:, k]
        dk = delta[:, k]
        wpi = pi.weights_at(k, t, xk)
        wq = q.weights_at(k, t, xk)
        wdiff = wq - wpi

        jac_b = np.zeros((n, dx, dx))
        jac_s = np.zeros((n, dx, dw, dx))
        jac_c = np.zeros((n, dx))
        b_diff = np.zeros((n, dx))
        s_diff = np.zeros((n, dx, dw))
        c_diff = np.zeros(n)
        active = np.flatnonzero(
            np.maximum(wpi.max(axis=0), np.abs(wdiff).max(axis=0)) > 0.0
        )
        for j in active:
            a = model.action_grid[j]
            wj = wpi[:, j]
            dj = wdiff[:, j]
            if wj.max() > 0.0:
                jac_b += wj[:, None, None] * _coef(
                    model.drift_dx, t, xk, a, (n, dx, dx)
                )
                jac_s += wj[:, None, None, None] * _coef(
                    model.diffusion_dx, t, xk, a, (n, dx, dw, dx)
                )
                jac_c += wj[:, None] * _coef(model.cost_dx, t, xk, a, (n, dx))
            if np.abs(dj).max() > 0.0:
                b_diff += dj[:, None] * _coef(model.drift, t, xk, a, (n, dx))
                s_diff += dj[:, None, None] * _coef(
                    model.diffusion, t, xk, a, (n, dx, dw)
                )
                c_diff += dj * _coef(model.cost, t, xk, a, (n,))

        drift_term = np.einsum("nil,nl->ni", jac_b, dk) + b_diff
        diff_term = np.einsum("niwl,nl->niw", jac_s, dk) + s_diff
        delta[:, k + 1] = (
            dk
            + drift_term * dt
            + np.einsum("niw,nw->ni", diff_term, driver.increments[:, k])
        )
        delta_p[:, k + 1] = delta_p[:, k] + (
            np.einsum("ni,ni->n", jac_c, dk) + c_diff
        ) * dt
        if not np.isfinite(delta[:, k + 1]).all():
            raise NumericalBlowup(k + 1, "variational state")

    return delta, delta_p


@dataclass(frozen=True)
class FeasibilityConfig:
    """Growth and integrability exponents of the problem data.

    L bounds the coefficients, pbar1/pbar2 their state/action growth,
    pbar3 the admissibility order of the control (may be inf), pbar the
    state integrability order, p1/p2 (and primed) the cost growth orders,
    and p the order at which the risk function is evaluated.
    """

    L: float
    pbar1: float
    pbar2: float
    pbar3: float
    pbar: float
    p1: float
    p2: float
    p1_prime: float
    p2_prime: float
    p: float

    def __post_init__(self):
        if not (0.0 <= self.pbar1 <= 1.0):
            raise ValueError("pbar1 must lie in [0, 1]")
        if self.pbar2 < 0.0 or self.pbar3 <= 0.0:
            raise ValueError("pbar2 must be >= 0 and pbar3 > 0")
        if self.pbar < 1.0 or self.p < 1.0:
            raise ValueError("pbar and p must be >= 1")
        for name in ("p1", "p2", "p1_prime", "p2_prime"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        finite = [self.L, self.pbar1, self.pbar2, self.pbar, self.p1,
                  self.p2, self.p1_prime, self.p2_prime, self.p]
        if not all(math.isfinite(v) for v in finite):
            raise ValueError("only pbar3 may be infinite")


@dataclass(frozen=True)
class FeasibilityReport:
    checks: tuple
    feasible: bool

    def failures(self):
        return [c for c in self.checks if not c[1]]


def check_feasibility(cfg):
    """Evaluate the exponent inequalities that keep total costs p-integrable.

    Returns a report with one pass/fail entry per inequality; the control's
    admissibility itself is recorded as trivially satisfied because measures
    live on a finite action grid.
    """
    ratio = math.inf if math.isinf(cfg.pbar3) else cfg.pbar3 / cfg.pbar
    bound = cfg.pbar / cfg.p - 1.0
    checks = (
        ("p < pbar", cfg.p < cfg.pbar, f"{cfg.p} < {cfg.pbar}"),
        ("pbar <= pbar3", cfg.pbar <= cfg.pbar3, f"{cfg.pbar} <= {cfg.pbar3}"),
        ("pbar2 <= pbar3/pbar", cfg.pbar2 <= ratio, f"{cfg.pbar2} <= {ratio}"),
        ("p1' <= p1", cfg.p1_prime <= cfg.p1, f"{cfg.p1_prime} <= {cfg.p1}"),
        ("p2' <= p2", cfg.p2_prime <= cfg.p2, f"{cfg.p2_prime} <= {cfg.p2}"),
        ("p1 < pbar/p - 1", cfg.p1 < bound, f"{cfg.p1} < {bound}"),
        ("p2 < pbar/p - 1", cfg.p2 < bound, f"{cfg.p2} < {bound}"),
        (
            "finite-grid admissibility",
            True,
            "sup_t int |a|^r pi_t(da) is finite on a finite action grid",
        ),
    )
    return FeasibilityReport(checks=checks, feasible=all(c[1] for c in checks))


def validate_gradients(model, seed=0, n_probes=20, rtol=1e-5, t_max=1.0):
    """Check the model's gradient maps against central finite differences.

    Probes random (t, x, atom) points and compares each supplied Jacobian to
    a second-order difference of the underlying coefficient.  Returns a dict
    of worst relative errors keyed by coefficient name.
    """
    rng = np.random.default_rng(seed)
    worst = {"drift": 0.0, "diffusion": 0.0, "cost": 0.0, "terminal": 0.0}
    dx = model.dim_x
    for _ in range(n_probes):
        t = float(rng.uniform(0.0, t_max))
        x = rng.standard_normal((1, dx))
        a = model.action_grid[rng.integers(model.n_atoms)]
        h = 1e-6 * (1.0 + np.abs(x))
        fd_b = np.zeros((1, dx, dx))
        fd_s = np.zeros((1, dx, model.dim_w, dx))
        fd_c = np.zeros((1, dx))
        fd_g = np.zeros((1, dx))
        for l in range(dx):
            xp = x.copy()
            xm = x.copy()
            xp[0, l] += h[0, l]
            xm[0, l] -= h[0, l]
            den = 2.0 * h[0, l]
            fd_b[0, :, l] = (
                _coef(model.drift, t, xp, a, (1, dx))
                - _coef(model.drift, t, xm, a, (1, dx))
            )[0] / den
            fd_s[0, :, :, l] = (
                _coef(model.diffusion, t, xp, a, (1, dx, model.dim_w))
                - _coef(model.diffusion, t, xm, a, (1, dx, model.dim_w))
            )[0] / den
            fd_c[0, l] = (
                _coef(model.cost, t, xp, a, (1,))
                - _coef(model.cost, t, xm, a, (1,))
            )[0] / den
            gp = np.broadcast_to(np.asarray(model.terminal(xp), float), (1,))
            gm = np.broadcast_to(np.asarray(model.terminal(xm), float), (1,))
            fd_g[0, l] = (gp - gm)[0] / den

        def rel(err, scale):
            return float(err / (1.0 + scale))

        worst["drift"] = max(
            worst["drift"],
            rel(
                np.abs(_coef(model.drift_dx, t, x, a, (1, dx, dx)) - fd_b).max(),
                np.abs(fd_b).max(),
            ),
        )
        worst["diffusion"] = max(
            worst["diffusion"],
            rel(
                np.abs(
                    _coef(model.diffusion_dx, t, x, a, (1, dx, model.dim_w, dx))
                    - fd_s
                ).max(),
                np.abs(fd_s).max(),
            ),
        )
        worst["cost"] = max(
            worst["cost"],
            rel(
                np.abs(_coef(model.cost_dx, t, x, a, (1, dx)) - fd_c).max(),
                np.abs(fd_c).max(),
            ),
        )
        gt = np.broadcast_to(np.asarray(model.terminal_dx(x), float), (1, dx))
        worst["terminal"] = max(
            worst["terminal"], rel(np.abs(gt - fd_g).max(), np.abs(fd_g).max())
        )
    worst["ok"] = all(worst[k] <= rtol for k in ("drift", "diffusion", "cost", "terminal"))
    return worst
