"""Shared builders for small test models."""

import numpy as np
import pytest

from riskmp import ModelSpec, dirac_initial


def make_model(
    atoms,
    drift=None,
    diffusion=None,
    cost=None,
    terminal=None,
    drift_dx=None,
    diffusion_dx=None,
    cost_dx=None,
    terminal_dx=None,
    x0=0.0,
    dim_x=1,
    dim_w=1,
):
    """1-d-friendly ModelSpec with zero defaults for anything omitted.

    Coefficient arguments are plain scalar-signature callables f(t, x, a)
    with x of shape (n, dim_x) and a an atom vector; omitted maps are zero.
    """
    zn = lambda t, x, a: np.zeros((x.shape[0], dim_x))
    return ModelSpec(
        dim_x=dim_x,
        dim_w=dim_w,
        dim_a=1,
        drift=drift or zn,
        diffusion=diffusion or (lambda t, x, a: np.zeros((x.shape[0], dim_x, dim_w))),
        cost=cost or (lambda t, x, a: np.zeros(x.shape[0])),
        terminal=terminal or (lambda x: np.zeros(x.shape[0])),
        drift_dx=drift_dx or (lambda t, x, a: np.zeros((x.shape[0], dim_x, dim_x))),
        diffusion_dx=diffusion_dx
        or (lambda t, x, a: np.zeros((x.shape[0], dim_x, dim_w, dim_x))),
        cost_dx=cost_dx or zn,
        terminal_dx=terminal_dx or (lambda x: np.zeros((x.shape[0], dim_x))),
        initial=dirac_initial(np.full(dim_x, x0)),
        action_grid=np.asarray(atoms, float).reshape(-1, 1),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
