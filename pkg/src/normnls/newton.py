"""Damped, deflated Newton iteration for the coupled normalized system.

Unknowns are the nodal values of u, v and the multipliers lam1, lam2.  The
Jacobian of the weak equations is banded once u and v are interleaved
(bandwidth 2), bordered by the two mass constraints, so each step costs three
banded solves and a 2x2 Schur complement.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .functionals import (
    NotInEError,
    StatePair,
    euler_lagrange,
    pohozaev_project,
    rayleigh_multipliers,
    system_residual,
)

log = logging.getLogger(__name__)


@dataclass
class NewtonResult:
    state: StatePair
    lambdas: tuple[float, float]
    converged: bool
    iterations: int
    residual: float
    history: list = field(default_factory=list)


@dataclass
class Deflation:
    """Multiplicative deflation prod_j (1 + radius^2 / |x - x_j|_{H1}^2)^power.

    Every root is registered together with its swapped partner when ``swap``
    is set, so the swapped copy of a known solution is not rediscovered.
    """

    radius: float = 1.0
    power: float = 2.0
    swap: bool = True
    roots: list = field(default_factory=list)

    def add(self, state: StatePair) -> None:
        self.roots.append(state.stacked().copy())
        if self.swap:
            self.roots.append(np.concatenate([state.v.values, state.u.values]))

    def _dist2(self, grid, x, r):
        d = x - r
        n = grid.n
        out = 0.0
        for part in (d[:n], d[n:]):
            out += part @ (grid.stiffness @ part) + np.dot(grid.weights, part * part)
        return float(out)

    def factor(self, grid, x: np.ndarray) -> float:
        out = 1.0
        for r in self.roots:
            out *= (1.0 + self.radius**2 / max(self._dist2(grid, x, r), 1e-300)) ** self.power
        return out

    def step_scale(self, grid, x: np.ndarray, dx: np.ndarray) -> float:
        """tau with deflated step = tau * undeflated step."""
        if not self.roots:
            return 1.0
        n = grid.n
        g = 0.0
        for r in self.roots:
            d = x - r
            d2 = self._dist2(grid, x, r)
            dd = 0.0
            for a, b in ((d[:n], dx[:n]), (d[n:], dx[n:])):
                dd += a @ (grid.stiffness @ b) + np.dot(grid.weights, a * b)
            rho2 = self.radius**2
            g += self.power * (-rho2 / (d2 * (d2 + rho2))) * 2.0 * dd
        denom = 1.0 - g
        if abs(denom) < 1e-12:
            return 1.0
        return 1.0 / denom


def _banded_jacobian(state: StatePair, l1: float, l2: float) -> np.ndarray:
    """Interleaved (u0, v0, u1, v1, ...) Jacobian in LAPACK general band storage (l=u=2)."""
    p, g = state.params, state.grid
    n = g.n
    u, v, W = state.u.values, state.v.values, g.weights
    c = g.edge_coeffs
    kdiag = c.copy()
    kdiag[1:] += c[:-1]
    duu = kdiag - W * (l1 + 3 * p.mu1 * u**2 + p.beta * v**2)
    dvv = kdiag - W * (l2 + 3 * p.mu2 * v**2 + p.beta * u**2)
    duv = -2 * p.beta * W * u * v
    ab = np.zeros((5, 2 * n))
    # ab[2 + i - j, j] = A[i, j]
    diag = np.empty(2 * n)
    diag[0::2], diag[1::2] = duu, dvv
    ab[2] = diag
    sup1 = np.zeros(2 * n)
    sup1[1::2] = duv  # A[2k, 2k+1]
    ab[1] = sup1
    sub1 = np.zeros(2 * n)
    sub1[0::2] = duv  # A[2k+1, 2k]
    ab[3] = sub1
    sup2 = np.zeros(2 * n)
    sup2[2::2] = -c[:-1]
    sup2[3::2] = -c[:-1]
    ab[0] = sup2
    sub2 = np.zeros(2 * n)
    sub2[0:-2:2] = -c[:-1]
    sub2[1:-2:2] = -c[:-1]
    ab[4] = sub2
    return ab


def _interleave(a, b):
    out = np.empty(2 * a.size)
    out[0::2], out[1::2] = a, b
    return out


def _residuals(state: StatePair, l1: float, l2: float):
    p, W = state.params, state.grid.weights
    du, dv = euler_lagrange(state)
    fu = du - l1 * W * state.u.values
    fv = dv - l2 * W * state.v.values
    gm = 0.5 * np.array([np.dot(W, state.u.values**2) - p.a1**2,
                         np.dot(W, state.v.values**2) - p.a2**2])
    return fu, fv, gm


def _merit(state, l1, l2):
    fu, fv, gm = _residuals(state, l1, l2)
    W = state.grid.weights
    return float(np.dot(fu**2 + fv**2, 1 / W) + np.sum(gm**2))


def newton_step(state: StatePair, l1: float, l2: float) -> tuple[np.ndarray, float, float]:
    """Full Newton correction (du stacked with dv, dlam1, dlam2)."""
    g = state.grid
    n = g.n
    W = g.weights
    fu, fv, gm = _residuals(state, l1, l2)
    ab = _banded_jacobian(state, l1, l2)
    bu = _interleave(-W * state.u.values, np.zeros(n))
    bv = _interleave(np.zeros(n), -W * state.v.values)
    rhs = np.column_stack([_interleave(fu, fv), bu, bv])
    sol = sla.solve_banded((2, 2), ab, rhs, check_finite=False)
    a_f, a_bu, a_bv = sol[:, 0], sol[:, 1], sol[:, 2]
    # constraint rows C = -B^T
    schur = np.array([[-bu @ a_bu, -bu @ a_bv], [-bv @ a_bu, -bv @ a_bv]])
    cf = np.array([-bu @ a_f, -bv @ a_f])
    dy = np.linalg.solve(schur, gm - cf)
    dx = -a_f - a_bu * dy[0] - a_bv * dy[1]
    du, dv = dx[0::2], dx[1::2]
    return np.concatenate([du, dv]), float(dy[0]), float(dy[1])


def newton_solve(state: StatePair, lambdas: tuple[float, float] | None = None, tol: float = 1e-10,
                 max_iter: int = 60, deflation: Deflation | None = None,
                 max_step: float | None = None, bound_multipliers: bool = False) -> NewtonResult:
    """Damped (optionally deflated) Newton iteration from ``state``.

    Convergence: relative residual ``system_residual`` below ``tol`` with the
    masses restored to rounding.  ``max_step`` caps the relative H^1 size of
    any single update.  With ``bound_multipliers`` the line search rejects
    steps that make a multiplier nonnegative (normalized solutions on R^3
    have negative multipliers; positive ones are artifacts of the ball).
    """
    g = state.grid
    n = g.n
    l1, l2 = lambdas if lambdas is not None else rayleigh_multipliers(state)
    history = []
    merit = _merit(state, l1, l2)
    for it in range(max_iter):
        res = system_residual(state, (l1, l2))
        history.append(res)
        if res < tol and state.on_sphere(1e-10):
            return NewtonResult(state, (l1, l2), True, it, res, history)
        try:
            dx, d1, d2 = newton_step(state, l1, l2)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("newton: linear solve failed: %s", exc)
            break
        x = state.stacked()
        tau = deflation.step_scale(g, x, dx) if deflation else 1.0
        dx, d1, d2 = tau * dx, tau * d1, tau * d2
        if max_step is not None:
            size = np.sqrt(np.dot(np.concatenate([g.weights, g.weights]), dx * dx))
            ref = np.sqrt(np.dot(np.concatenate([g.weights, g.weights]), x * x))
            if size > max_step * ref:
                shrink = max_step * ref / size
                dx, d1, d2 = dx * shrink, d1 * shrink, d2 * shrink
        t = 1.0
        accepted = False
        while t > 1e-4:
            if bound_multipliers and max(l1 + t * d1, l2 + t * d2) >= 0:
                t *= 0.5
                continue
            trial = state.with_fields(x[:n] + t * dx[:n], x[n:] + t * dx[n:])
            m_trial = _merit(trial, l1 + t * d1, l2 + t * d2)
            if deflation:
                # compare deflated merits so the search cannot slide into a known root
                m_cmp = m_trial * deflation.factor(g, trial.stacked()) ** 2
                m_ref = merit * deflation.factor(g, x) ** 2
            else:
                m_cmp, m_ref = m_trial, merit
            if m_cmp < (1 - 1e-4 * t) * m_ref or t == 1.0 and m_trial < merit * 1e-2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if bound_multipliers and max(l1 + t * d1, l2 + t * d2) >= 0:
                break
            # take the smallest step anyway; stagnation is detected by max_iter
            trial = state.with_fields(x[:n] + t * dx[:n], x[n:] + t * dx[n:])
            m_trial = _merit(trial, l1 + t * d1, l2 + t * d2)
        state, l1, l2, merit = trial, l1 + t * d1, l2 + t * d2, m_trial
    res = system_residual(state, (l1, l2))
    history.append(res)
    ok = res < tol and state.on_sphere(1e-10)
    return NewtonResult(state, (l1, l2), ok, len(history) - 1, res, history)


def _beta_coord(beta: float) -> float:
    # continuation coordinate: linear near 0, logarithmic for strong coupling
    return float(np.sign(beta) * np.log1p(abs(beta)))


def _beta_from(c: float) -> float:
    return float(np.sign(c) * np.expm1(abs(c)))


def _projected_start(x: StatePair, lams):
    try:
        y = pohozaev_project(x)
    except NotInEError:
        return x, lams
    if system_residual(y) < system_residual(x, lams):
        return y, None
    return x, lams


def continue_root(state: StatePair, lambdas: tuple[float, float], beta_target: float,
                  tol: float = 1e-10, step: float = 0.05, max_step: float = 0.25,
                  min_step: float = 1e-4, max_iter: int = 30, project: bool = False) -> NewtonResult:
    """Natural-parameter continuation of a discrete root in beta.

    Steps are taken in sign(beta) log(1 + |beta|); a failed Newton solve
    halves the step.  Returns the last result; ``converged`` is False when
    the step fell below ``min_step`` before reaching ``beta_target``.
    With ``project`` each warm start is first Pohozaev-projected at the new
    coupling, kept only if that lowers the system residual.
    """
    c, c_end = _beta_coord(state.params.beta), _beta_coord(beta_target)
    x, lams = state, lambdas
    last = NewtonResult(x, lams, True, 0, system_residual(x, lams))
    direction = 1.0 if c_end > c else -1.0
    while abs(c_end - c) > 1e-14:
        c_next = c + direction * min(step, abs(c_end - c))
        b = beta_target if c_next == c_end else _beta_from(c_next)
        x0, l0 = x.with_params(x.params.with_beta(b)), lams
        if project:
            x0, l0 = _projected_start(x0, l0)
        res = newton_solve(x0, l0, tol, max_iter)
        if not res.converged:
            step *= 0.5
            if step < min_step:
                return NewtonResult(x, lams, False, last.iterations, last.residual, last.history)
            continue
        c, x, lams, last = c_next, res.state, res.lambdas, res
        step = min(step * 1.5, max_step)
    return last
