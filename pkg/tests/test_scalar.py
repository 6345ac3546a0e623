import numpy as np
import pytest

from normnls.grid import RadialGrid
from normnls.scalar import (
    CurveUndefinedError,
    canonical_soliton,
    diagonal_curve,
    diagonal_level,
    discrete_ground_state,
    format_golden,
    ground_state_for_mass,
    load_packaged_golden,
    normalized_gradient_flow,
    parse_golden,
    residual_norm,
)


def test_soliton_identities():
    q = canonical_soliton()
    # Pohozaev for -Lap Q + Q = Q^3 in R^3: |grad Q|^2 = 3 |Q|^2, |Q|^4 = 4 |Q|^2
    assert q.dirichlet == pytest.approx(3 * q.mass, rel=1e-10)
    assert q.quartic == pytest.approx(4 * q.mass, rel=1e-10)
    assert q.q0 == pytest.approx(4.3373877, abs=1e-6)


def test_packaged_golden_matches_shooting():
    gold = load_packaged_golden()
    fresh = canonical_soliton().goldens(1.0, 1.0)
    for key in ("q0", "mass_Q", "dirichlet_Q", "ell", "lambda"):
        assert gold[key] == pytest.approx(fresh[key], rel=1e-10)


def test_golden_round_trip():
    vals = canonical_soliton().goldens(2.0, 1.5)
    assert parse_golden(format_golden(vals)) == vals
    with pytest.raises(ValueError):
        parse_golden("version = 99\n")


@pytest.mark.parametrize("a", [1.0, 4.0, 7.5])
def test_level_identities(a):
    gs = ground_state_for_mass(a)
    assert gs.level == pytest.approx(gs.quartic / 8, rel=1e-10)
    assert abs(gs.pohozaev_residual) < 1e-8 * gs.kinetic
    g2 = ground_state_for_mass(2 * a)
    assert g2.level == pytest.approx(gs.level / 4, rel=1e-12)
    assert g2.lam == pytest.approx(gs.lam / 16, rel=1e-12)


def test_mu_scaling():
    # w -> sqrt(mu) w maps mass a^2 at coupling mu to mass mu a^2 at coupling 1
    a, mu = 3.0, 2.0
    assert ground_state_for_mass(a, mu).level == pytest.approx(
        ground_state_for_mass(a * np.sqrt(mu)).level / mu, rel=1e-12)


def test_discrete_converges_to_shooting_second_order():
    gs = ground_state_for_mass(4.0)
    errs = []
    for n in (2000, 4000):
        g = RadialGrid(20.0, n)
        w, lam = discrete_ground_state(g, 4.0)
        assert residual_norm(w, lam) < 1e-8
        errs.append((abs(lam / gs.lam - 1), np.max(np.abs(w.values - gs.profile(g).values))))
    assert errs[1][0] < 5e-4 and errs[1][1] < 5e-4
    for e1, e2 in zip(*errs):
        assert e1 / e2 == pytest.approx(4.0, rel=0.05)


def test_gradient_flow_agrees_with_newton():
    # E-descent and the Newton solve of the Euler-Lagrange system are
    # different O(h^2) discretizations of the same state
    diffs = []
    for n in (2000, 4000):
        g = RadialGrid(20.0, n)
        w, lam = discrete_ground_state(g, 4.0)
        wf, lf = normalized_gradient_flow(g, 4.0, max_iter=3000)
        diffs.append(np.max(np.abs(w.values - wf.values)))
        assert lf == pytest.approx(lam, rel=1e-3)
    assert diffs[1] < 1e-4
    assert diffs[0] / diffs[1] > 3.5


def test_diagonal_blowup_and_domain():
    for b in (-0.5, -0.9):
        assert diagonal_level(b, 4.0) == pytest.approx(
            2 * ground_state_for_mass(4.0).level / (1 + b) ** 2, rel=1e-12)
    with pytest.raises(CurveUndefinedError):
        diagonal_curve(-1.0, 4.0)
