"""Shared fixtures: small grids with assembled operators, reused per session."""

import numpy as np
import pytest

from pboltz.collision import CollisionOperator, DeltaKernel, FourierCollision
from pboltz.dispersion import DispersionField, DispersionParams
from pboltz.linearized import assemble_K, assemble_L, assemble_M, spectrum_L
from pboltz.torus_grid import TorusGrid


@pytest.fixture(scope="session")
def params():
    return DispersionParams(d=2, r=1.0)


@pytest.fixture(scope="session")
def stack8(params):
    grid = TorusGrid(2, 8)
    disp = DispersionField(grid, params)
    delta = DeltaKernel.auto(grid, disp)
    return grid, disp, delta


@pytest.fixture(scope="session")
def stack12(params):
    grid = TorusGrid(2, 12)
    disp = DispersionField(grid, params)
    delta = DeltaKernel.auto(grid, disp)
    return grid, disp, delta


@pytest.fixture(scope="session")
def collision12(stack12):
    grid, disp, delta = stack12
    return CollisionOperator(grid, disp, delta)


@pytest.fixture(scope="session")
def fourier12(stack12):
    grid, disp, delta = stack12
    return FourierCollision(grid, disp, delta)


@pytest.fixture(scope="session")
def operators12(stack12):
    grid, disp, delta = stack12
    M = assemble_M(grid, disp, delta)
    K = assemble_K(grid, disp, delta)
    L = assemble_L(grid, disp, delta)
    return M, K, L


@pytest.fixture(scope="session")
def summary12(operators12, stack12):
    _, disp, _ = stack12
    return spectrum_L(operators12[2], disp)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260823)
