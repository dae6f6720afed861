import numpy as np
import pytest

from qgpe.grid import Grid, SpectralField4, random_band_field
from qgpe.params import PhysParams
from qgpe.multipliers import leray_project


@pytest.fixture(scope="session")
def grid8():
    return Grid(8, 8, 8)


@pytest.fixture(scope="session")
def grid16():
    return Grid(16, 16, 16)


@pytest.fixture(scope="session")
def grid24():
    return Grid(24, 24, 24)


@pytest.fixture(scope="session")
def params():
    # distinct diffusivities: the general case
    return PhysParams(epsilon=0.1, froude_F=2.0, nu=0.04, nu_prime=0.4)


@pytest.fixture(scope="session")
def params_eq():
    # equal diffusivities: the degenerate case with closed-form eigenstructure
    return PhysParams(epsilon=0.1, froude_F=2.0, nu=0.05, nu_prime=0.05)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)


def interior_band(grid):
    """Band keeping products alias-free: |m| <= n/4 per axis."""
    base = 2.0 * np.pi / grid.box_length
    return base * 0.99, base * (min(grid.n1, grid.n2, grid.n3) // 4)


def make_field(grid, rng, divfree=True, band=None, decay=0.0):
    data = random_band_field(grid, rng, band=band or interior_band(grid), ncomp=4, decay=decay)
    f = SpectralField4(grid, data)
    return leray_project(f) if divfree else f


def make_scalar(grid, rng, band=None, decay=0.0):
    return random_band_field(grid, rng, band=band or interior_band(grid), ncomp=0, decay=decay)


def rel(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


def fitted_constant_check(cal_ratios, test_ratios, refined_ratio=None,
                          slack=1.05, stability=0.2):
    """Fitted-constant methodology: fit C on a calibration set, require no
    violation beyond slack * C on a disjoint test set, and stability under
    one grid refinement."""
    C = max(cal_ratios)
    assert max(test_ratios) <= slack * C, (max(test_ratios), C)
    if refined_ratio is not None:
        assert abs(refined_ratio - C) <= stability * C, (refined_ratio, C)
    return C
