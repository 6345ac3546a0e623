"""Energy functional, fiber map and Pohozaev machinery for the coupled system

    -Lap u - lam1 u = mu1 u^3 + beta u v^2
    -Lap v - lam2 v = mu2 v^3 + beta u^2 v,      |u|_2 = a1, |v|_2 = a2.

All integrals are grid quadratures; ``kinetic`` is the discrete Dirichlet form
and ``quartic`` is ``int mu1 u^4 + 2 beta u^2 v^2 + mu2 v^4``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .grid import (
    RadialField,
    RadialGrid,
    check_same_grid,
    dilate,
    dirichlet_energy,
    lp4,
    mass,
    mixed_quartic,
)


class NotInEError(ValueError):
    """The quartic interaction is not positive, so the fiber map has no maximum."""


class NotTangentError(ValueError):
    """A direction is not tangent to the product of mass spheres."""


class SingularOperatorError(ArithmeticError):
    """(-Lap + 1) could not be inverted."""


class NumericalFailureError(ArithmeticError):
    """A dense eigen-solve failed."""


class UndefinedRatioError(ValueError):
    """Gagliardo-Nirenberg ratio of the zero field."""


class DegenerateStateError(ValueError):
    """A component vanishes identically."""


@dataclass(frozen=True)
class ProblemParams:
    a1: float
    a2: float
    mu1: float = 1.0
    mu2: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("a1", "a2", "mu1", "mu2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def symmetric(cls, a: float, beta: float, mu: float = 1.0) -> "ProblemParams":
        return cls(a, a, mu, mu, beta)

    @property
    def is_symmetric(self) -> bool:
        return self.a1 == self.a2 and self.mu1 == self.mu2

    def with_beta(self, beta: float) -> "ProblemParams":
        return replace(self, beta=float(beta))

    def as_dict(self) -> dict:
        return {"a1": self.a1, "a2": self.a2, "mu1": self.mu1, "mu2": self.mu2, "beta": self.beta}


@dataclass(frozen=True)
class StatePair:
    u: RadialField
    v: RadialField
    params: ProblemParams
    grid: RadialGrid = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "grid", check_same_grid(self.u, self.v))

    @classmethod
    def from_arrays(cls, grid: RadialGrid, u, v, params: ProblemParams) -> "StatePair":
        return cls(RadialField(grid, u), RadialField(grid, v), params)

    def with_fields(self, u, v) -> "StatePair":
        if not isinstance(u, RadialField):
            u = RadialField(self.grid, u)
        if not isinstance(v, RadialField):
            v = RadialField(self.grid, v)
        return StatePair(u, v, self.params)

    def with_params(self, params: ProblemParams) -> "StatePair":
        return StatePair(self.u, self.v, params)

    def swapped(self) -> "StatePair":
        """The involution (u, v) -> (v, u); parameters are swapped too."""
        p = self.params
        return StatePair(self.v, self.u, ProblemParams(p.a2, p.a1, p.mu2, p.mu1, p.beta))

    def on_sphere(self, tol: float = 1e-10) -> bool:
        p = self.params
        return (abs(mass(self.u) - p.a1**2) <= tol * p.a1**2
                and abs(mass(self.v) - p.a2**2) <= tol * p.a2**2)

    def __add__(self, other: "StatePair") -> "StatePair":
        return self.with_fields(self.u + other.u, self.v + other.v)

    def scaled(self, c: float) -> "StatePair":
        return self.with_fields(self.u * c, self.v * c)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u.values, self.v.values])


class Integrals(NamedTuple):
    kinetic_u: float
    kinetic_v: float
    u4: float
    v4: float
    u2v2: float
    beta: float
    mu1: float
    mu2: float

    @property
    def kinetic(self) -> float:
        return self.kinetic_u + self.kinetic_v

    @property
    def quartic(self) -> float:
        # exactly rounded, so the value is invariant under swapping u and v
        return math.fsum((self.mu1 * self.u4, 2 * self.beta * self.u2v2, self.mu2 * self.v4))


def integrals(state: StatePair) -> Integrals:
    p = state.params
    return Integrals(
        dirichlet_energy(state.u), dirichlet_energy(state.v),
        lp4(state.u), lp4(state.v), mixed_quartic(state.u, state.v),
        p.beta, p.mu1, p.mu2,
    )


@dataclass(frozen=True)
class DiagnosticsBundle:
    kinetic: float
    quartic: float
    pohozaev_residual: float
    lambda1: float
    lambda2: float
    grad_norm: float
    segregation: float

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


# -- energies -----------------------------------------------------------------


def energy(state: StatePair) -> float:
    it = integrals(state)
    return 0.5 * it.kinetic - 0.25 * it.quartic


def pohozaev_residual(state: StatePair) -> float:
    it = integrals(state)
    return it.kinetic - 0.75 * it.quartic


def fiber_value(state: StatePair, s: float, its: Integrals | None = None) -> float:
    it = its or integrals(state)
    return 0.5 * np.exp(2 * s) * it.kinetic - 0.25 * np.exp(3 * s) * it.quartic


def _require_E(it: Integrals) -> None:
    if not it.quartic > 0:
        raise NotInEError(f"quartic interaction {it.quartic:.3e} is not positive")


def s_map(state: StatePair, its: Integrals | None = None) -> float:
    """Unique maximizer of s -> J(s * state): e^s = 4 kinetic / (3 quartic)."""
    it = its or integrals(state)
    _require_E(it)
    return float(np.log(4 * it.kinetic / (3 * it.quartic)))


def projected_energy(state: StatePair, its: Integrals | None = None) -> float:
    """E(u, v) = J(s_map * (u, v)) = 8 kinetic^3 / (27 quartic^2)."""
    it = its or integrals(state)
    _require_E(it)
    return 8 * it.kinetic**3 / (27 * it.quartic**2)


def dilate_pair(s: float, state: StatePair) -> StatePair:
    return state.with_fields(dilate(s, state.u), dilate(s, state.v))


def retract(state: StatePair) -> StatePair:
    """Rescale each component onto its mass sphere."""
    p = state.params
    mu_, mv_ = mass(state.u), mass(state.v)
    if mu_ == 0 or mv_ == 0:
        raise DegenerateStateError("cannot retract a state with a vanishing component")
    return state.with_fields(state.u * (p.a1 / np.sqrt(mu_)), state.v * (p.a2 / np.sqrt(mv_)))


def pohozaev_project(state: StatePair, tol_poh: float = 1e-8, max_polish: int = 8) -> StatePair:
    """Dilate onto the Pohozaev set, polishing s on the resampled integrals.

    Each trial dilates the *original* state by the accumulated s and restores
    the masses; the update s += s_map(trial) is Newton's step for the shift
    law s_map(t * x) = s_map(x) - t.
    """
    it = integrals(state)
    _require_E(it)
    if abs(it.kinetic - 0.75 * it.quartic) <= tol_poh * it.kinetic:
        return state
    s = s_map(state, it)
    trial = state
    for _ in range(max_polish + 1):
        trial = retract(dilate_pair(s, state))
        it = integrals(trial)
        _require_E(it)
        if abs(it.kinetic - 0.75 * it.quartic) <= tol_poh * it.kinetic:
            return trial
        s += s_map(trial, it)
    return trial


# -- gradient -----------------------------------------------------------------


def _h1_banded(grid: RadialGrid) -> np.ndarray:
    """Upper banded storage of K + W, the weak form of (-Lap + 1)."""
    c = grid.edge_coeffs
    diag = c.copy()
    diag[1:] += c[:-1]
    diag += grid.weights
    ab = np.zeros((2, grid.n))
    ab[0, 1:] = -c[:-1]
    ab[1] = diag
    return ab


def solve_h1(grid: RadialGrid, rhs: np.ndarray) -> np.ndarray:
    """Solve (K + W) x = rhs (rhs already in weak form)."""
    try:
        return sla.solveh_banded(_h1_banded(grid), rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularOperatorError(str(exc)) from exc


def euler_lagrange(state: StatePair) -> tuple[np.ndarray, np.ndarray]:
    """Unconstrained weak gradients dJ/du, dJ/dv (vectors paired with nodal values)."""
    p, g = state.params, state.grid
    u, v, W = state.u.values, state.v.values, g.weights
    du = g.stiffness @ u - W * (p.mu1 * u**3 + p.beta * u * v * v)
    dv = g.stiffness @ v - W * (p.mu2 * v**3 + p.beta * u * u * v)
    return du, dv


class Gradient(NamedTuple):
    gu: RadialField
    gv: RadialField
    lambda1: float
    lambda2: float

    def h1_norm(self) -> float:
        g = self.gu.grid
        n2 = 0.0
        for f in (self.gu.values, self.gv.values):
            n2 += f @ (g.stiffness @ f) + np.dot(g.weights, f * f)
        return float(np.sqrt(max(n2, 0.0)))


def gradient(state: StatePair) -> Gradient:
    """H^1 gradient of J on the product of spheres, with its multipliers.

    g = (-Lap + 1)^{-1}(-Lap u - mu1 u^3 - beta u v^2 - lam1 u), lam1 fixed by
    <u, g>_{L2} = 0, and likewise for v.
    """
    g = state.grid
    W = g.weights
    du, dv = euler_lagrange(state)
    out = []
    for f, d in ((state.u.values, du), (state.v.values, dv)):
        both = solve_h1(g, np.column_stack([d, W * f]))
        a_d, a_f = both[:, 0], both[:, 1]
        denom = np.dot(W, f * a_f)
        lam = np.dot(W, f * a_d) / denom if denom != 0 else 0.0
        out.append((RadialField(g, a_d - lam * a_f), float(lam)))
    (gu, l1), (gv, l2) = out
    return Gradient(gu, gv, l1, l2)


def rayleigh_multipliers(state: StatePair) -> tuple[float, float]:
    """lam_i = (int |grad u|^2 - mu1 u^4 - beta u^2 v^2) / a_i^2, the multipliers at a solution."""
    p = state.params
    it = integrals(state)
    l1 = (it.kinetic_u - p.mu1 * it.u4 - p.beta * it.u2v2) / mass(state.u)
    l2 = (it.kinetic_v - p.mu2 * it.v4 - p.beta * it.u2v2) / mass(state.v)
    return float(l1), float(l2)


def system_residual(state: StatePair, lambdas: tuple[float, float] | None = None) -> float:
    """Relative residual of the coupled equations in the quadrature L2 norm.

    Normalized by the L2 norm of -Lap u, -Lap v so it is scale free.
    """
    g = state.grid
    W = g.weights
    l1, l2 = lambdas if lambdas is not None else rayleigh_multipliers(state)
    du, dv = euler_lagrange(state)
    ru = du / W - l1 * state.u.values
    rv = dv / W - l2 * state.v.values
    lu = (g.stiffness @ state.u.values) / W
    lv = (g.stiffness @ state.v.values) / W
    num = np.dot(W, ru**2) + np.dot(W, rv**2)
    den = np.dot(W, lu**2) + np.dot(W, lv**2)
    return float(np.sqrt(num / den))


def diagnostics(state: StatePair, grad: Gradient | None = None) -> DiagnosticsBundle:
    it = integrals(state)
    grad = grad or gradient(state)
    l1, l2 = rayleigh_multipliers(state)
    return DiagnosticsBundle(
        kinetic=it.kinetic,
        quartic=it.quartic,
        pohozaev_residual=it.kinetic - 0.75 * it.quartic,
        lambda1=l1,
        lambda2=l2,
        grad_norm=grad.h1_norm(),
        segregation=it.u2v2,
    )


def projected_energy_differential(state: StatePair) -> tuple[np.ndarray, np.ndarray]:
    """Weak gradient of E = 8 K^3 / (27 Q^2) (pairs with nodal perturbations).

    dE = e^{2s} <grad u, grad phi> - e^{3s} <mu1 u^3 + beta u v^2, phi> + (v terms).
    """
    p, g = state.params, state.grid
    it = integrals(state)
    _require_E(it)
    es = 4 * it.kinetic / (3 * it.quartic)
    u, v, W = state.u.values, state.v.values, g.weights
    eu = es**2 * (g.stiffness @ u) - es**3 * W * (p.mu1 * u**3 + p.beta * u * v * v)
    ev = es**2 * (g.stiffness @ v) - es**3 * W * (p.mu2 * v**3 + p.beta * u * u * v)
    return eu, ev


def projected_gradient(state: StatePair) -> Gradient:
    """H^1 gradient of E on the product of spheres (same construction as ``gradient``)."""
    g = state.grid
    W = g.weights
    eu, ev = projected_energy_differential(state)
    out = []
    for f, d in ((state.u.values, eu), (state.v.values, ev)):
        both = solve_h1(g, np.column_stack([d, W * f]))
        a_d, a_f = both[:, 0], both[:, 1]
        lam = np.dot(W, f * a_d) / np.dot(W, f * a_f)
        out.append((RadialField(g, a_d - lam * a_f), float(lam)))
    (gu, l1), (gv, l2) = out
    return Gradient(gu, gv, l1, l2)


# -- second order -------------------------------------------------------------


def _tangent_violation(state: StatePair, phi: np.ndarray, psi: np.ndarray) -> float:
    W = state.grid.weights
    u, v = state.u.values, state.v.values
    nu = np.sqrt(np.dot(W, u * u) * np.dot(W, phi * phi)) or 1.0
    nv = np.sqrt(np.dot(W, v * v) * np.dot(W, psi * psi)) or 1.0
    return max(abs(np.dot(W, u * phi)) / nu, abs(np.dot(W, v * psi)) / nv)


def _as_arrays(direction):
    a, b = direction
    return (np.asarray(getattr(a, "values", a), dtype=float),
            np.asarray(getattr(b, "values", b), dtype=float))


def hessian_form(state: StatePair, dir1, dir2, lambdas: tuple[float, float] | None = None,
                 tangent_tol: float = 1e-8) -> float:
    """Second variation of J on the spheres, at multipliers ``lambdas``.

    int grad phi.grad phi' + grad psi.grad psi' - lam1 phi phi' - lam2 psi psi'
      - int (3 mu1 u^2 + beta v^2) phi phi' + (3 mu2 v^2 + beta u^2) psi psi'
            + 2 beta u v (phi psi' + psi phi')
    """
    p1, q1 = _as_arrays(dir1)
    p2, q2 = _as_arrays(dir2)
    for p, q in ((p1, q1), (p2, q2)):
        if _tangent_violation(state, p, q) > tangent_tol:
            raise NotTangentError("direction is not tangent to the mass spheres")
    pr, g = state.params, state.grid
    l1, l2 = lambdas if lambdas is not None else rayleigh_multipliers(state)
    K, W = g.stiffness, g.weights
    u, v = state.u.values, state.v.values
    val = p1 @ (K @ p2) + q1 @ (K @ q2)
    val -= l1 * np.dot(W, p1 * p2) + l2 * np.dot(W, q1 * q2)
    val -= np.dot(W, (3 * pr.mu1 * u**2 + pr.beta * v**2) * p1 * p2)
    val -= np.dot(W, (3 * pr.mu2 * v**2 + pr.beta * u**2) * q1 * q2)
    val -= np.dot(W, 2 * pr.beta * u * v * (p1 * q2 + q1 * p2))
    return float(val)


def hessian_matrix(state: StatePair, lambdas: tuple[float, float] | None = None) -> np.ndarray:
    """Dense matrix H with hessian_form(x, y) = x^T H y on stacked (phi, psi)."""
    pr, g = state.params, state.grid
    l1, l2 = lambdas if lambdas is not None else rayleigh_multipliers(state)
    n = g.n
    K = g.stiffness.toarray()
    W = g.weights
    u, v = state.u.values, state.v.values
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = K - np.diag(W * (l1 + 3 * pr.mu1 * u**2 + pr.beta * v**2))
    H[n:, n:] = K - np.diag(W * (l2 + 3 * pr.mu2 * v**2 + pr.beta * u**2))
    cross = -np.diag(W * 2 * pr.beta * u * v)
    H[:n, n:] = cross
    H[n:, :n] = cross
    return H


def pohozaev_constraint_row(state: StatePair) -> np.ndarray:
    """Differential of kinetic - (3/4) quartic on stacked (phi, psi)."""
    pr, g = state.params, state.grid
    K, W = g.stiffness, g.weights
    u, v = state.u.values, state.v.values
    ru = 2 * (K @ u) - 3 * W * (pr.mu1 * u**3 + pr.beta * u * v * v)
    rv = 2 * (K @ v) - 3 * W * (pr.mu2 * v**3 + pr.beta * u * u * v)
    return np.concatenate([ru, rv])


def _restricted_spectrum(H: np.ndarray, W2: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # symmetric rescaling by the mass metric; null space of the scaled constraints
    s = 1.0 / np.sqrt(W2)
    Hs = H * s[:, None] * s[None, :]
    C = rows * s[None, :]
    q, _ = np.linalg.qr(C.T, mode="complete")
    Z = q[:, rows.shape[0]:]
    try:
        return np.linalg.eigvalsh(Z.T @ Hs @ Z)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(str(exc)) from exc


class MorseData(NamedTuple):
    index_S: int
    index_P: int
    tol: float
    spectrum_S: np.ndarray
    spectrum_P: np.ndarray


def morse_index(state: StatePair, tol_eig: float = 1e-8,
                lambdas: tuple[float, float] | None = None) -> MorseData:
    """Generalized Morse indices (non-positive eigenvalues) on the spheres and on P.

    Dense: intended for n up to a few hundred.
    """
    g = state.grid
    W = g.weights
    W2 = np.concatenate([W, W])
    H = hessian_matrix(state, lambdas)
    zero = np.zeros(g.n)
    rows_S = np.vstack([np.concatenate([W * state.u.values, zero]),
                        np.concatenate([zero, W * state.v.values])])
    rows_P = np.vstack([rows_S, pohozaev_constraint_row(state)])
    eig_S = _restricted_spectrum(H, W2, rows_S)
    eig_P = _restricted_spectrum(H, W2, rows_P)
    scale = np.max(np.abs(np.diag(H) / W2))
    tol = tol_eig * scale
    return MorseData(int(np.sum(eig_S <= tol)), int(np.sum(eig_P <= tol)), tol, eig_S, eig_P)


def gn_ratio(f: RadialField) -> float:
    """int f^4 / ( |f|_2 * |grad f|_2^3 ), the Gagliardo-Nirenberg quotient."""
    m, d = mass(f), dirichlet_energy(f)
    if m == 0 or d == 0:
        raise UndefinedRatioError("Gagliardo-Nirenberg ratio of the zero field")
    return lp4(f) / (np.sqrt(m) * d**1.5)
