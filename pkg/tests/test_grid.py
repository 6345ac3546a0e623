import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normnls.grid import (
    GridError,
    GridMismatchError,
    RadialField,
    RadialGrid,
    dilate,
    dirichlet_energy,
    h1_inner,
    inner_l2,
    integrate,
    laplacian,
    lp4,
    mass,
    mixed_quartic,
)

GAUSS_MASS = math.pi**1.5
GAUSS_DIRICHLET = 1.5 * math.pi**1.5


def gauss(g, w=1.0):
    return g.field(lambda r: np.exp(-r**2 / (2 * w * w)))


def test_gaussian_mass_spectral():
    assert abs(mass(gauss(RadialGrid(40, 2000))) / GAUSS_MASS - 1) < 1e-13


def test_weights_integrate_polynomials_exactly():
    g = RadialGrid(3.0, 50)
    for k in range(3):
        exact = 4 * math.pi * 3.0 ** (k + 3) / (k + 3)
        assert integrate(g.field(lambda r: r**k)) == pytest.approx(exact, rel=1e-12)


def test_dirichlet_second_order():
    errs = [abs(dirichlet_energy(gauss(RadialGrid(40, n))) / GAUSS_DIRICHLET - 1) for n in (1000, 2000)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.01)


def test_exponential_oracle():
    g = RadialGrid(40, 4000)
    f = g.field(lambda r: np.exp(-r))
    assert mass(f) == pytest.approx(math.pi, rel=1e-7)
    assert lp4(f) == pytest.approx(math.pi / 8, rel=1e-6)
    assert dirichlet_energy(f) == pytest.approx(math.pi, rel=1e-4)


def test_summation_by_parts_exact(grid):
    f = gauss(grid, 1.3)
    assert dirichlet_energy(f) == pytest.approx(-inner_l2(f, laplacian(f)), rel=1e-12)


def test_laplacian_of_r_squared_interior():
    g = RadialGrid(5.0, 200)
    lap = laplacian(g.field(lambda r: r**2)).values
    # (r f)''/r = 6 away from the end-corrected weights at r_max
    m = max(8, g.n // 50)
    assert np.allclose(lap[:-m], 6.0, rtol=1e-9)


def test_laplacian_of_gaussian_converges():
    g = RadialGrid(20, 4000)
    r = g.nodes
    exact = (r**2 - 3) * np.exp(-r**2 / 2)
    assert np.max(np.abs(laplacian(gauss(g)).values - exact)) < 1e-4


def test_bad_grid_rejected():
    with pytest.raises(GridError):
        RadialGrid(1.0, 2)
    with pytest.raises(GridError):
        RadialGrid(-1.0, 10)


def test_grid_mismatch():
    a, b = RadialGrid(10, 100), RadialGrid(10, 101)
    with pytest.raises(GridMismatchError):
        inner_l2(a.field(np.ones_like), b.field(np.ones_like))


def test_field_validation(grid):
    with pytest.raises(GridError):
        RadialField(grid, np.zeros(3))
    with pytest.raises(ValueError):
        RadialField(grid, np.full(grid.n, np.nan))


def test_dilate_preserves_mass(grid):
    f = gauss(grid)
    for s in (-0.5, 0.3, 1.0):
        assert mass(dilate(s, f)) == pytest.approx(mass(f), rel=1e-6)
    assert dilate(0.0, f) is f


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.1, 10.0), w=st.floats(0.5, 3.0))
def test_homogeneity(c, w):
    g = RadialGrid(30.0, 600)
    f = gauss(g, w)
    assert mass(f * c) == pytest.approx(c * c * mass(f), rel=1e-12)
    assert dirichlet_energy(f * c) == pytest.approx(c * c * dirichlet_energy(f), rel=1e-12)
    assert lp4(f * c) == pytest.approx(c**4 * lp4(f), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(w1=st.floats(0.5, 3.0), w2=st.floats(0.5, 3.0))
def test_bilinear_symmetry(w1, w2):
    g = RadialGrid(30.0, 600)
    f, h = gauss(g, w1), gauss(g, w2)
    assert inner_l2(f, h) == pytest.approx(inner_l2(h, f), rel=1e-14)
    assert h1_inner(f, h) == pytest.approx(h1_inner(h, f), rel=1e-12)
    assert mixed_quartic(f, h) == pytest.approx(mixed_quartic(h, f), rel=1e-14)
    # Cauchy-Schwarz for the quartic coupling
    assert mixed_quartic(f, h) <= math.sqrt(lp4(f) * lp4(h)) * (1 + 1e-12)
