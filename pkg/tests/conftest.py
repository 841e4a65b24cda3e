"""Shared fixtures: small grids and reproducible random field families."""

from __future__ import annotations

import numpy as np
import pytest

from boltzlab.collision import KernelParams, SphereQuadrature
from boltzlab.phase import SpatialGrid, VelocityGrid, maxwellian


@pytest.fixture(scope="session")
def vg_small():
    return VelocityGrid(v_max=6.0, n_per_axis=12)


@pytest.fixture(scope="session")
def vg_coarse():
    return VelocityGrid(v_max=6.0, n_per_axis=8)


@pytest.fixture(scope="session")
def sg0():
    return SpatialGrid(dimension=0, period=1.0, n_cells=1)


@pytest.fixture(scope="session")
def sg1():
    return SpatialGrid(dimension=1, period=1.0, n_cells=8)


@pytest.fixture(scope="session")
def params_hard():
    return KernelParams(gamma=1.0, cb=1.0)


@pytest.fixture(scope="session")
def params_maxwell():
    return KernelParams(gamma=0.0, cb=1.0)


@pytest.fixture(scope="session")
def params_soft():
    return KernelParams(gamma=-1.0, cb=1.0)


@pytest.fixture(scope="session")
def quad32():
    return SphereQuadrature.product(4, 8)


@pytest.fixture(scope="session")
def quad8():
    return SphereQuadrature.product(2, 4)


def smooth_positive_F(vgrid, rng, n_bumps=3):
    """Random smooth positive distribution: mu times (1 + small Gaussians).

    The same draw evaluated on two grids represents the same continuum
    function, so refinement studies can reuse the parameters.
    """
    params = bump_parameters(rng, n_bumps)
    return evaluate_bumpy(vgrid, params)


def bump_parameters(rng, n_bumps=3):
    return [
        (
            rng.uniform(0.05, 0.4),  # amplitude
            rng.uniform(-2.0, 2.0, size=3),  # center
            rng.uniform(0.8, 1.5),  # width
        )
        for _ in range(n_bumps)
    ]


def evaluate_bumpy(vgrid, bump_params):
    nodes = vgrid.nodes()
    shape = np.ones(vgrid.n_nodes)
    for amp, center, width in bump_params:
        d2 = ((nodes - center[None, :]) ** 2).sum(axis=1)
        shape += amp * np.exp(-0.5 * d2 / width**2)
    return maxwellian(vgrid) * shape
