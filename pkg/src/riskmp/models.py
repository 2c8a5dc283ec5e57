"""Benchmark problem builders.

Two canonical pure-diffusion problems where the action sets the volatility
directly, plus a coefficient-table escape hatch for simple custom dynamics.
"""

import math

import numpy as np

from .errors import ConfigInvalid
from .sde import FeasibilityConfig, ModelSpec, dirac_initial

__all__ = [
    "sign_volatility_model",
    "on_off_volatility_model",
    "model_from_tables",
]


def _pure_diffusion_model(atoms, x0=0.0):
    """b = 0, sigma(t, x, a) = a, c = 0, g(x) = x^2, point-mass start."""
    growth = FeasibilityConfig(
        L=1.0,
        pbar1=0.0,
        pbar2=1.0,
        pbar3=math.inf,
        pbar=8.0,
        p1=2.0,
        p2=0.0,
        p1_prime=1.0,
        p2_prime=0.0,
        p=2.0,
    )
    return ModelSpec(
        dim_x=1,
        dim_w=1,
        dim_a=1,
        drift=lambda t, x, a: np.zeros((x.shape[0], 1)),
        diffusion=lambda t, x, a: np.full((x.shape[0], 1, 1), a[0]),
        cost=lambda t, x, a: np.zeros(x.shape[0]),
        terminal=lambda x: x[:, 0] ** 2,
        drift_dx=lambda t, x, a: np.zeros((x.shape[0], 1, 1)),
        diffusion_dx=lambda t, x, a: np.zeros((x.shape[0], 1, 1, 1)),
        cost_dx=lambda t, x, a: np.zeros((x.shape[0], 1)),
        terminal_dx=lambda x: 2.0 * x,
        initial=dirac_initial(x0),
        action_grid=np.asarray(atoms, float)[:, None],
        growth=growth,
    )


def sign_volatility_model():
    """Binary volatility-sign problem: actions {-1, +1} drive sigma = a.

    The half/half mixture has exactly zero averaged volatility, so its state
    paths are identically zero while every Dirac control is a Brownian
    motion; minimizing E[x_T^2] separates mixed from strict controls.
    """
    return _pure_diffusion_model([-1.0, 1.0])


def on_off_volatility_model():
    """Volatility on/off problem: actions {0, 1}, sigma = a.

    Blending the off control with any other measure by a fraction eps moves
    the paths by O(eps) in mean square, i.e. an O(eps^2) squared response.
    """
    return _pure_diffusion_model([0.0, 1.0])


def model_from_tables(tables):
    """Build a ModelSpec from plain coefficient tables.

    Expected keys:
      dim_x, dim_w, action_grid: list of atoms (scalars or dim_a-vectors)
      drift:     {"const": (n_atoms, dim_x), "x": (dim_x, dim_x) optional}
      diffusion: {"const": (n_atoms, dim_x, dim_w)}
      cost:      {"const": (n_atoms,), "x": (dim_x,) optional}
      terminal:  {"const": scalar, "x": (dim_x,)}
      x0:        (dim_x,) initial point mass
      growth:    optional feasibility exponent dict

    Drift is affine in the state with a per-atom intercept; diffusion and the
    cost intercept are per-atom constants.  Gradients are exact by
    construction.
    """
    try:
        dim_x = int(tables["dim_x"])
        dim_w = int(tables["dim_w"])
        atoms = np.asarray(tables["action_grid"], float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        n_atoms, dim_a = atoms.shape
        drift_const = np.asarray(tables["drift"]["const"], float).reshape(
            n_atoms, dim_x
        )
        drift_x = np.asarray(
            tables["drift"].get("x", np.zeros((dim_x, dim_x))), float
        ).reshape(dim_x, dim_x)
        diff_const = np.asarray(tables["diffusion"]["const"], float).reshape(
            n_atoms, dim_x, dim_w
        )
        cost_const = np.asarray(
            tables.get("cost", {}).get("const", np.zeros(n_atoms)), float
        ).reshape(n_atoms)
        cost_x = np.asarray(
            tables.get("cost", {}).get("x", np.zeros(dim_x)), float
        ).reshape(dim_x)
        term_const = float(tables.get("terminal", {}).get("const", 0.0))
        term_x = np.asarray(
            tables.get("terminal", {}).get("x", np.zeros(dim_x)), float
        ).reshape(dim_x)
        x0 = np.asarray(tables.get("x0", np.zeros(dim_x)), float).reshape(dim_x)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad coefficient tables: {exc}") from exc

    index = {tuple(a): j for j, a in enumerate(atoms)}

    def atom_of(a):
        return index[tuple(np.atleast_1d(a))]

    growth = None
    if "growth" in tables:
        growth = FeasibilityConfig(**{
            k: (math.inf if v in ("inf", "Infinity") else float(v))
            for k, v in tables["growth"].items()
        })

    return ModelSpec(
        dim_x=dim_x,
        dim_w=dim_w,
        dim_a=dim_a,
        drift=lambda t, x, a: drift_const[atom_of(a)] + x @ drift_x.T,
        diffusion=lambda t, x, a: np.broadcast_to(
            diff_const[atom_of(a)], (x.shape[0], dim_x, dim_w)
        ),
        cost=lambda t, x, a: cost_const[atom_of(a)] + x @ cost_x,
        terminal=lambda x: term_const + x @ term_x,
        drift_dx=lambda t, x, a: np.broadcast_to(
            drift_x, (x.shape[0], dim_x, dim_x)
        ),
        diffusion_dx=lambda t, x, a: np.zeros((x.shape[0], dim_x, dim_w, dim_x)),
        cost_dx=lambda t, x, a: np.broadcast_to(cost_x, (x.shape[0], dim_x)),
        terminal_dx=lambda x: np.broadcast_to(term_x, (x.shape[0], dim_x)),
        initial=dirac_initial(x0),
        action_grid=atoms,
        growth=growth,
    )
