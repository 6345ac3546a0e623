import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normnls.functionals import (ProblemParams, StatePair, energy, integrals, pohozaev_residual,
                                 retract)
from normnls.grid import RadialGrid
from normnls.scalar import ground_state_for_mass
from normnls.sphere_opt import (SolveConfig, Status, build_test_set, collapse_detector,
                                default_grid, h1_distance, minimize_E, resample_state,
                                sigma_distance)

from conftest import gaussian_pair


@pytest.fixture(scope="module")
def ts_grid():
    return default_grid(4.0, n=2000)


@settings(max_examples=25, deadline=None)
@given(wu=st.floats(0.5, 3.0), wv=st.floats(0.5, 3.0), shift=st.floats(0.0, 3.0))
def test_sigma_distance_is_swap_invariant(grid, wu, wv, shift):
    x = gaussian_pair(grid, wu=wu, wv=wv, shift=shift)
    y = gaussian_pair(grid, wu=wv, wv=wu)
    assert sigma_distance(x, y) == pytest.approx(sigma_distance(x.swapped(), y), rel=1e-12)
    assert sigma_distance(x, x.swapped()) == 0.0
    assert sigma_distance(x, y) <= h1_distance(x, y)


def test_resample_onto_same_nodes_is_identity(grid, pair):
    back = resample_state(pair, RadialGrid(grid.r_max, grid.n))
    assert np.allclose(back.u.values, pair.u.values, atol=1e-13)


def test_collapse_detector_fires_on_spreading_component():
    g = RadialGrid(40.0, 2000)
    start = gaussian_pair(g, wu=1.0, wv=1.0)
    w0 = ground_state_for_mass(4.0).profile(g).values
    spread = np.exp(-(g.nodes / 12.0) ** 2)
    end = retract(StatePair.from_arrays(g, w0, spread, start.params))
    verdict = collapse_detector([start, end])
    assert verdict and verdict.component == "v"
    assert verdict.w0_distance < 1e-3
    assert not collapse_detector([start, start])
    with pytest.raises(ValueError):
        collapse_detector([start])


def test_solve_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(armijo=0.7)
    with pytest.raises(ValueError):
        SolveConfig(shrink=1.0)
    with pytest.raises(ValueError):
        SolveConfig(tol_grad=0.0)


def test_descent_decreases_projected_energy():
    g = RadialGrid(40.0, 800)
    rep = minimize_E(gaussian_pair(g, beta=0.5, wu=1.0, wv=1.6), SolveConfig(max_iter=50))
    assert rep.status in (Status.MAX_ITER, Status.CONVERGED, Status.COLLAPSED)
    assert np.all(np.diff(rep.history) <= 1e-12 * abs(rep.history[0]))


@pytest.mark.parametrize("k", [1, 2])
def test_test_set_states_on_pohozaev_and_beta_free(ts_grid, k):
    sets = [build_test_set(k, 8, 0, ProblemParams.symmetric(4.0, b), ts_grid) for b in (-0.5, -3.0)]
    for s in sets[0].states:
        assert abs(pohozaev_residual(s)) <= 1e-12 * integrals(s).kinetic
        assert s.on_sphere()
    # disjoint supports make J independent of the coupling
    assert np.array_equal(sets[0].values, sets[1].values)
    assert sets[0].values[0] == pytest.approx(energy(sets[0].states[0]), rel=1e-14)


def test_test_set_bounds_nested(ts_grid):
    p = ProblemParams.symmetric(4.0, -1.0)
    c = [build_test_set(k, 8, 0, p, ts_grid).upper_bound for k in (1, 2, 3)]
    assert c[0] >= ground_state_for_mass(4.0).level
    assert c[0] <= c[1] <= c[2]


def test_test_set_rejects_bad_dimension(ts_grid):
    with pytest.raises(ValueError):
        build_test_set(0, 8, 0, ProblemParams.symmetric(4.0, -1.0), ts_grid)
