import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normnls.functionals import (
    DegenerateStateError,
    NotInEError,
    ProblemParams,
    StatePair,
    energy,
    euler_lagrange,
    fiber_value,
    gradient,
    hessian_form,
    integrals,
    morse_index,
    pohozaev_project,
    pohozaev_residual,
    projected_energy,
    rayleigh_multipliers,
    retract,
    s_map,
    system_residual,
)
from normnls.grid import RadialGrid, mass
from normnls.scalar import diagonal_curve, ground_state_for_mass

from conftest import gaussian_pair


def test_energy_closed_form_gaussian():
    # (G, G) with G = exp(-r^2/2), beta = 0: J = K - Q/4 summed over two copies
    g = RadialGrid(40, 4000)
    G = np.exp(-g.nodes**2 / 2)
    st_ = StatePair.from_arrays(g, G, G, ProblemParams(1, 1, 1, 1, 0))
    k = 1.5 * math.pi**1.5
    q = math.pi**1.5 / (2 * math.sqrt(2))
    assert energy(st_) == pytest.approx(2 * (k / 2 - q / 4), abs=2e-2)


def test_params_validation():
    with pytest.raises(ValueError):
        ProblemParams(0, 1)
    with pytest.raises(ValueError):
        ProblemParams(1, 1, mu1=-1)


def test_retract_and_degenerate(grid, pair):
    assert pair.on_sphere(1e-12)
    with pytest.raises(DegenerateStateError):
        retract(pair.with_fields(np.zeros(grid.n), pair.v.values))


def test_not_in_E(grid):
    st_ = gaussian_pair(grid, beta=-2.0, wu=1.0, wv=1.0)
    assert integrals(st_).quartic < 0
    with pytest.raises(NotInEError):
        s_map(st_)
    with pytest.raises(NotInEError):
        pohozaev_project(st_)


def test_fiber_maximum(pair):
    s0 = s_map(pair)
    peak = fiber_value(pair, s0)
    assert peak == pytest.approx(projected_energy(pair), rel=1e-12)
    for s in (-1.0, -0.1, 0.1, 1.0):
        assert fiber_value(pair, s0 + s) < peak


def test_pohozaev_projection(pair):
    p = pohozaev_project(pair)
    it = integrals(p)
    assert abs(pohozaev_residual(p)) <= 1e-8 * it.kinetic
    assert p.on_sphere(1e-10)
    # on P the energy is the projected energy; dilation invariance holds to O(h^2)
    assert energy(p) == pytest.approx(projected_energy(p), rel=1e-8)
    assert energy(p) == pytest.approx(projected_energy(pair), rel=5e-3)


def test_gradient_matches_finite_differences(grid, pair):
    rng = np.random.default_rng(3)
    env = np.exp(-grid.nodes**2 / 8)
    d = pair.with_fields(rng.standard_normal(grid.n) * env, rng.standard_normal(grid.n) * env)
    du, dv = euler_lagrange(pair)
    an = du @ d.u.values + dv @ d.v.values
    eps = 1e-5
    fd = (energy(pair + d.scaled(eps)) - energy(pair + d.scaled(-eps))) / (2 * eps)
    assert fd == pytest.approx(an, rel=1e-7)
    # the H^1 gradient represents the tangential differential
    assert gradient(pair).h1_norm() > 0


def test_hessian_symmetric(grid, pair):
    rng = np.random.default_rng(4)
    W = grid.weights
    def tangent():
        a, b = rng.standard_normal((2, grid.n)) * np.exp(-grid.nodes**2 / 8)
        a -= (W @ (a * pair.u.values)) / 16 * pair.u.values
        b -= (W @ (b * pair.v.values)) / 16 * pair.v.values
        return a, b
    d1, d2 = tangent(), tangent()
    assert hessian_form(pair, d1, d2) == pytest.approx(hessian_form(pair, d2, d1), rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(beta=st.floats(-0.9, 1.0), wu=st.floats(0.6, 2.0), wv=st.floats(0.6, 2.0))
def test_swap_invariance(beta, wu, wv):
    g = RadialGrid(20.0, 400)
    x = gaussian_pair(g, beta, wu=wu, wv=wv)
    y = x.swapped()
    assert energy(y) == pytest.approx(energy(x), rel=1e-13)
    if integrals(x).quartic > 0:
        assert s_map(y) == pytest.approx(s_map(x), abs=1e-12)
    l1, l2 = rayleigh_multipliers(x)
    m1, m2 = rayleigh_multipliers(y)
    assert (m1, m2) == pytest.approx((l2, l1), rel=1e-12)


def test_diagonal_is_critical():
    st_, lam = diagonal_curve(-0.5, 4.0)
    assert system_residual(st_, (lam, lam)) < 1e-9
    gs = ground_state_for_mass(4.0)
    assert energy(st_) == pytest.approx(2 * gs.level / 0.25, rel=1e-4)


def test_morse_relation_on_diagonal():
    gs = ground_state_for_mass(4.0)
    g = RadialGrid(22.0 / gs.gamma, 300)
    st_, lam = diagonal_curve(-0.5, 4.0, grid=g)
    md = morse_index(st_, lambdas=(lam, lam))
    assert md.index_S == md.index_P + 1
    assert mass(st_.u) == pytest.approx(16.0, rel=1e-10)
