import numpy as np
import pytest

from normnls.functionals import retract, system_residual
from normnls.newton import Deflation, continue_root, newton_solve
from normnls.scalar import diagonal_curve, diagonal_grid


@pytest.fixture(scope="module")
def diag():
    g = diagonal_grid(-0.2, 4.0, h_scaled=2e-2)
    state, lam = diagonal_curve(-0.2, 4.0, grid=g)
    return g, state, lam


def test_diagonal_state_is_a_root(diag):
    _, state, lam = diag
    assert system_residual(state, (lam, lam)) < 1e-10


def test_newton_returns_to_diagonal_from_perturbation(diag):
    g, state, lam = diag
    r = g.nodes
    start = retract(state.with_fields(state.u.values * (1 + 0.05 * np.exp(-r**2)), state.v.values))
    res = newton_solve(start)
    assert res.converged
    assert res.lambdas == pytest.approx((lam, lam), abs=1e-9)
    assert np.max(np.abs(res.state.u.values - state.u.values)) < 1e-10
    assert res.history[-1] < 1e-10


def test_continuation_tracks_diagonal_curve(diag):
    g, state, lam = diag
    res = continue_root(state, (lam, lam), -0.4)
    exact, lam_exact = diagonal_curve(-0.4, 4.0, grid=g)
    assert res.converged
    assert res.state.params.beta == -0.4
    assert res.lambdas[0] == pytest.approx(lam_exact, rel=1e-10)
    assert np.max(np.abs(res.state.v.values - exact.v.values)) < 1e-9


def test_deflation_blows_up_at_known_root(diag):
    g, state, _ = diag
    d = Deflation()
    d.add(state)
    near = state.stacked() * (1 + 1e-6)
    far = state.stacked() * 2.0
    assert d.factor(g, near) > 1e6
    assert d.factor(g, far) == pytest.approx(1.0, abs=0.5)
    # swapped partner is registered too
    assert len(d.roots) == 2
