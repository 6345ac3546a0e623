import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import normnls.beta_study as bs
from normnls.beta_study import (Branch, EmptyBranchError, FitRefusedError, SweepRecord,
                                consistency_flag, continue_branch, limit_equation_residual,
                                overlap_measure, segregation_rate_fit)
from normnls.functionals import ProblemParams, StatePair
from normnls.grid import RadialField
from normnls.newton import NewtonResult
from normnls.scalar import diagonal_curve, diagonal_grid, discrete_ground_state
from normnls.sphere_opt import Status, polish


@pytest.fixture(scope="module")
def dgrid():
    return diagonal_grid(-0.2, 4.0, h_scaled=2e-2)


@pytest.fixture(scope="module")
def w0_state(dgrid):
    w, lam = discrete_ground_state(dgrid, 4.0)
    zero = RadialField(dgrid, np.zeros(dgrid.n))
    return StatePair(w, zero, ProblemParams.symmetric(4.0, -5.0)), lam


def _records(betas, seg, overlap=None):
    overlap = overlap if overlap is not None else [1.0] * len(betas)
    return [SweepRecord("b0", b, 0.0, -1.0, -1.0, s, 0.0, o, Status.CONVERGED, None)
            for b, s, o in zip(betas, seg, overlap)]


def test_limit_residual_vanishes_on_scalar_ground_state(w0_state):
    state, lam = w0_state
    # w = u - v = w0 solves the limit equation with the first multiplier
    assert limit_equation_residual(state, (lam, -1.0)) < 1e-12
    assert limit_equation_residual(state, (lam, -1.0), norm="l2") < 1e-11
    assert limit_equation_residual(state.swapped(), (-1.0, lam)) < 1e-12
    assert limit_equation_residual(state, (1.01 * lam, -1.0)) > 1e-3


def test_limit_residual_rejects_unknown_norm(w0_state):
    with pytest.raises(ValueError):
        limit_equation_residual(w0_state[0], (-1.0, -1.0), norm="sup")


def test_limit_residual_infinite_for_equal_components(dgrid):
    s, lam = diagonal_curve(-0.2, 4.0, grid=dgrid)
    assert math.isinf(limit_equation_residual(s, (lam, lam)))


def test_overlap_measure(w0_state, dgrid):
    state, _ = w0_state
    assert overlap_measure(state) == 0.0
    s, _ = diagonal_curve(-0.2, 4.0, grid=dgrid)
    full = overlap_measure(s, threshold=0.0)
    assert full == pytest.approx(float(np.sum(dgrid.weights)))


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1e-3, 1e3), slope=st.floats(-3.0, -0.1))
def test_rate_fit_recovers_power_law(c, slope):
    betas = [-1.0, -2.0, -5.0, -10.0, -20.0]
    fit = segregation_rate_fit(_records(betas, [c * abs(b) ** slope for b in betas]))
    assert fit.exponent == pytest.approx(slope, abs=1e-6)
    assert fit.intercept == pytest.approx(math.log(c), abs=1e-6)
    assert fit.residual < 1e-9
    assert not fit.suspicious


def test_rate_fit_inverse_law():
    betas = [-1.0, -3.0, -10.0, -30.0, -100.0]
    fit = segregation_rate_fit(_records(betas, [10.0 / abs(b) for b in betas]))
    assert abs(fit.exponent + 1.0) < 1e-6


def test_constant_segregation_is_suspicious():
    fit = segregation_rate_fit(_records([-1.0, -2.0, -5.0, -10.0], [3.0] * 4))
    assert abs(fit.exponent) < 1e-12
    assert fit.suspicious


def test_rate_fit_refusals():
    with pytest.raises(FitRefusedError):
        segregation_rate_fit(_records([-1.0, -5.0, -10.0], [1.0, 0.5, 0.1]))
    with pytest.raises(FitRefusedError):
        segregation_rate_fit(_records([-1.0, -2.0, -3.0, -5.0], [1.0, 0.5, 0.3, 0.2]))


def test_consistency_flag():
    betas = [-1.0, -10.0]
    assert not consistency_flag(_records(betas, [1.0, 0.1], [1.0, 0.1]))
    assert consistency_flag(_records(betas, [1.0, 0.1], [1.0, 1.0]))
    assert not consistency_flag(_records(betas[:1], [1.0]))


def test_sweep_record_row_keys():
    row = _records([-2.0], [0.5])[0].row()
    assert list(row) == ["branch_id", "beta", "energy", "lambda1", "lambda2", "segregation",
                         "limit_residual", "overlap"]


@pytest.fixture(scope="module")
def diag_report(dgrid):
    s, lam = diagonal_curve(-0.2, 4.0, grid=dgrid)
    return polish(s, lambdas=(lam, lam), with_morse=False)


def test_branch_along_diagonal(diag_report, dgrid):
    branch = continue_branch(diag_report, [-0.3, -0.5])
    assert isinstance(branch, Branch) and branch.complete
    assert [r.beta for r in branch] == [-0.2, -0.3, -0.5]
    _, lam = diagonal_curve(-0.5, 4.0, grid=dgrid)
    assert branch[-1].lambda1 == pytest.approx(lam, rel=1e-9)
    # energy of the symmetric branch grows as the coupling decreases
    assert branch[0].energy < branch[1].energy < branch[2].energy
    assert branch.lipschitz > 0


def test_branch_input_validation(diag_report):
    with pytest.raises(ValueError):
        continue_branch(diag_report, [-0.1])
    with pytest.raises(ValueError):
        continue_branch(diag_report, [-0.5, -0.3])


def test_empty_branch_raises(diag_report, monkeypatch):
    def fail(state, lambdas, beta, **kw):
        return NewtonResult(state, lambdas, False, 0, 1.0)

    monkeypatch.setattr(bs, "continue_root", fail)
    with pytest.raises(EmptyBranchError):
        continue_branch(diag_report, [-0.3])


def test_branch_terminates_with_reason(diag_report, monkeypatch):
    real = bs.continue_root

    def fail_late(state, lambdas, beta, **kw):
        if beta < -0.35:
            return NewtonResult(state, lambdas, False, 0, 1.0)
        return real(state, lambdas, beta, **kw)

    monkeypatch.setattr(bs, "continue_root", fail_late)
    branch = continue_branch(diag_report, [-0.3, -0.4])
    assert len(branch) == 2
    assert branch.termination == "non-convergence at beta=-0.4"
