"""Scalar ground state of -Lap w - lam w = mu w^3 with prescribed mass.

Everything is obtained from the canonical soliton Q (-Lap Q + Q = Q^3) by
the scaling family

    w(x) = (g / sqrt(mu)) Q(g x),   lam = -g^2,   g = mass(Q) / (mu a^2).

Q itself comes from shooting on the radial ODE; its integrals are carried
along as extra ODE states so they do not inherit the grid's quadrature error.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .grid import FOUR_PI, RadialField, RadialGrid, dilate, dirichlet_energy, lp4, mass

log = logging.getLogger(__name__)

GOLDEN_VERSION = 1
_RTOL = 1e-13
_ATOL = 1e-16
_R0 = 1e-6
_R_END = 60.0


class NoBracketError(RuntimeError):
    """Shooting bisection could not bracket the ground state."""


class CurveUndefinedError(ValueError):
    """The symmetric solution curve needs mu + beta > 0."""


# -- shooting -----------------------------------------------------------------


def _rhs(r, y):
    q, dq = y[0], y[1]
    r2 = r * r
    return [dq, q - q**3 - 2.0 * dq / r, FOUR_PI * q * q * r2, FOUR_PI * dq * dq * r2, FOUR_PI * q**4 * r2]


def _start(q0):
    # series Q = q0 + c r^2 + ..., c = (q0 - q0^3)/6
    c = (q0 - q0**3) / 6.0
    q = q0 + c * _R0**2
    dq = 2 * c * _R0
    return [q, dq, FOUR_PI * q0**2 * _R0**3 / 3, 0.0, FOUR_PI * q0**4 * _R0**3 / 3]


def _crossing(r, y):
    return y[0]


_crossing.terminal = True
_crossing.direction = -1


def _turning(r, y):
    return y[1]


_turning.terminal = True
_turning.direction = 1


def _shoot(q0, dense=False):
    return solve_ivp(
        _rhs, (_R0, _R_END), _start(q0), method="DOP853", rtol=_RTOL, atol=_ATOL,
        events=(_crossing, _turning), dense_output=dense,
    )


def _overshoots(q0) -> tuple[bool, float]:
    """True if Q crosses zero; also the radius where the trajectory failed."""
    sol = _shoot(q0)
    if sol.t_events[0].size:
        return True, float(sol.t_events[0][0])
    if sol.t_events[1].size:
        return False, float(sol.t_events[1][0])
    raise NoBracketError(f"shot from Q(0)={q0} neither crossed nor turned before r={_R_END}")


@dataclass(frozen=True)
class Soliton:
    """Canonical soliton Q with high-accuracy integrals."""

    q0: float
    mass: float
    dirichlet: float
    quartic: float
    r_match: float
    tail_coeff: float
    _sol: object = None

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inner = r <= self.r_match
        ri = np.maximum(r[inner], _R0)
        out[inner] = self._sol.sol(ri)[0]
        ro = r[~inner]
        out[~inner] = self.tail_coeff * np.exp(-ro) / ro
        return out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inner = r <= self.r_match
        ri = np.maximum(r[inner], _R0)
        out[inner] = self._sol.sol(ri)[1]
        ro = r[~inner]
        out[~inner] = -self.tail_coeff * np.exp(-ro) * (1.0 / ro + 1.0 / ro**2)
        return out

    def goldens(self, a: float = 1.0, mu: float = 1.0) -> dict:
        g = ScalarGroundState.scale(self, a, mu)
        return {
            "version": GOLDEN_VERSION,
            "q0": self.q0,
            "mass_Q": self.mass,
            "dirichlet_Q": self.dirichlet,
            "quartic_Q": self.quartic,
            "a": a,
            "mu": mu,
            "lambda": g.lam,
            "ell": g.level,
        }


def solve_canonical_soliton(tol: float = 1e-12) -> Soliton:
    """Shoot Q'' + 2Q'/r = Q - Q^3, Q'(0) = 0, bisecting on Q(0)."""
    lo, hi = 1.0, 6.0
    if _overshoots(lo)[0] or not _overshoots(hi)[0]:
        raise NoBracketError("initial bracket [1, 6] does not straddle the ground state")
    r_fail = 0.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        over, r_fail = _overshoots(mid)
        if over:
            hi = mid
        else:
            lo = mid
    q0 = 0.5 * (lo + hi)
    _, r_lo = _overshoots(lo)
    _, r_hi = _overshoots(hi)
    # the two bracketing shots agree up to where either blows off; match a
    # Yukawa tail well before that
    r_match = min(r_lo, r_hi) - 4.0
    if r_match < 8.0:
        raise NoBracketError(f"bisection did not resolve the tail (match radius {r_match:.2f})")
    sol = solve_ivp(_rhs, (_R0, r_match), _start(q0), method="DOP853",
                    rtol=_RTOL, atol=_ATOL, dense_output=True)
    q_m, dq_m, m_in, k_in, p_in = sol.y[:, -1]
    c = q_m * r_match * np.exp(r_match)
    # tail integrals of C e^{-r}/r (the cubic term is below rounding there)
    e2 = np.exp(-2 * r_match)
    m_tail = FOUR_PI * c**2 * e2 / 2
    k_tail = FOUR_PI * c**2 * e2 * (1 / 2 + 1 / r_match)
    p_tail = 0.0
    log.debug("soliton q0=%.14f r_match=%.2f", q0, r_match)
    return Soliton(q0, m_in + m_tail, k_in + k_tail, p_in + p_tail, r_match, c, sol)


@lru_cache(maxsize=1)
def canonical_soliton() -> Soliton:
    return solve_canonical_soliton()


# -- golden file --------------------------------------------------------------


def format_golden(values: dict) -> str:
    lines = ["# canonical soliton goldens: -Lap Q + Q = Q^3 in R^3"]
    for k, v in values.items():
        lines.append(f"{k} = {int(v) if k == 'version' else float(v)!r}")
    return "\n".join(lines) + "\n"


def parse_golden(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"golden line {lineno}: expected 'key = value'")
        key = key.strip()
        out[key] = int(val) if key == "version" else float(val)
    if out.get("version") != GOLDEN_VERSION:
        raise ValueError(f"unsupported golden version {out.get('version')}")
    return out


def load_packaged_golden() -> dict:
    text = resources.files("normnls").joinpath("data/soliton_golden.txt").read_text()
    return parse_golden(text)


def write_golden(path: Path, values: dict) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, format_golden(values))


# -- scalar ground state ------------------------------------------------------


@dataclass(frozen=True)
class ScalarGroundState:
    mass_target: float
    mu: float
    gamma: float
    lam: float
    level: float
    kinetic: float
    quartic: float
    soliton: Soliton

    @classmethod
    def scale(cls, sol: Soliton, a: float, mu: float = 1.0) -> "ScalarGroundState":
        if a <= 0 or mu <= 0:
            raise ValueError("mass and mu must be positive")
        g = sol.mass / (mu * a * a)
        kinetic = g * sol.dirichlet / mu
        quartic = g * sol.quartic / mu**2  # integral of w^4 (mu not included)
        return cls(a, mu, g, -g * g, kinetic / 6.0, kinetic, quartic, sol)

    def profile_fn(self, r):
        return self.gamma / np.sqrt(self.mu) * self.soliton(self.gamma * np.asarray(r))

    def profile(self, grid: RadialGrid) -> RadialField:
        return grid.field(self.profile_fn)

    @property
    def pohozaev_residual(self) -> float:
        return self.kinetic - 0.75 * self.mu * self.quartic


def ground_state_for_mass(a: float, mu: float = 1.0) -> ScalarGroundState:
    return ScalarGroundState.scale(canonical_soliton(), a, mu)


# -- discrete problem on a grid -----------------------------------------------


def scalar_residual(w: RadialField, lam: float, mu: float = 1.0) -> np.ndarray:
    g = w.grid
    return -(g.laplacian_matrix @ w.values) - lam * w.values - mu * w.values**3


def residual_norm(w: RadialField, lam: float, mu: float = 1.0) -> float:
    res = scalar_residual(w, lam, mu)
    return float(np.sqrt(np.dot(w.grid.weights, res**2)))


def _bordered_tridiag_solve(diag, off, border, f1, f2):
    """Solve [[T, -b], [b^T, 0]] [x; y] = [f1; f2] with T symmetric tridiagonal."""
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    sol = sla.solve_banded((1, 1), ab, np.column_stack([f1, border]), check_finite=False)
    a_f, a_b = sol[:, 0], sol[:, 1]
    y = (f2 - border @ a_f) / (border @ a_b)
    return a_f + y * a_b, y


def discrete_scalar_solve(grid: RadialGrid, a: float, coupling: float, init: np.ndarray, lam: float,
                          tol: float = 1e-12, max_iter: int = 50) -> tuple[RadialField, float]:
    """Newton for K w - lam W w - coupling W w^3 = 0 with W.w^2 = a^2."""
    W = grid.weights
    K = grid.stiffness
    c = grid.edge_coeffs
    kdiag = c.copy()
    kdiag[1:] += c[:-1]
    w = np.array(init, dtype=float)
    for _ in range(max_iter):
        f1 = K @ w - lam * W * w - coupling * W * w**3
        f2 = 0.5 * (np.dot(W, w * w) - a * a)
        scale = np.sqrt(np.dot(1 / W, f1**2))
        if scale < tol * max(1.0, abs(lam)) * a and abs(f2) < tol * a * a:
            break
        diag = kdiag - lam * W - 3 * coupling * W * w**2
        dw, dlam = _bordered_tridiag_solve(diag, -c[:-1], W * w, -f1, -f2)
        w = w + dw
        lam = lam + dlam
    return RadialField(grid, w), float(lam)


def discrete_ground_state(grid: RadialGrid, a: float, mu: float = 1.0, tol: float = 1e-12,
                          max_iter: int = 50) -> tuple[RadialField, float]:
    """Newton solve of the discrete scalar problem with mass a^2 on ``grid``.

    Seeded by the sampled continuum profile; returns (profile, lambda).
    """
    gs = ground_state_for_mass(a, mu)
    return discrete_scalar_solve(grid, a, mu, gs.profile(grid).values, gs.lam, tol, max_iter)


def _shifted_stiffness(grid: RadialGrid, c: float) -> np.ndarray:
    """Upper banded storage of K + c W."""
    e = grid.edge_coeffs
    ab = np.zeros((2, grid.n))
    ab[0, 1:] = -e[:-1]
    ab[1] = e + c * grid.weights
    ab[1, 1:] += e[:-1]
    return ab


def normalized_gradient_flow(grid: RadialGrid, a: float, mu: float = 1.0, tol: float = 1e-10,
                             max_iter: int = 5000, dt: float = 0.5) -> tuple[RadialField, float]:
    """Normalized gradient flow for the scalar ground state, independent of shooting.

    The cubic problem in R^3 is mass supercritical, so the flow descends the
    dilation-invariant functional E(w) = 8 K^3 / (27 mu^2 Q^2) (K the Dirichlet
    form, Q = int w^4) on the mass sphere, starting from a Gaussian.  Its
    minimizers are the dilations of the ground state; one final dilation
    puts the result on the Pohozaev set.  Returns (profile, lambda).
    """
    W = grid.weights
    K = grid.stiffness
    w = np.exp(-grid.nodes**2 / 2)
    w *= a / np.sqrt(np.dot(W, w * w))
    gnorm0 = None
    for it in range(max_iter):
        kin = float(w @ (K @ w))
        q4 = float(np.dot(W, w**4))
        es = 4 * kin / (3 * mu * q4)
        lam = es * (kin - mu * es * q4) / (a * a)
        d = es**2 * (K @ w) - es**3 * mu * W * w**3
        ab = _shifted_stiffness(grid, max(-lam, 1e-3))
        both = sla.solveh_banded(ab, np.column_stack([d, W * w]), check_finite=False)
        step = both[:, 0] - np.dot(W, w * both[:, 0]) / np.dot(W, w * both[:, 1]) * both[:, 1]
        step /= es**2
        # E is dilation invariant only up to discretization error; removing the
        # generator 3/2 w + r w' of the orbit stops a slow drift along it
        gen = 1.5 * w + grid.nodes * np.gradient(np.append(w, 0.0), grid.h)[:-1]
        kg = K @ gen + W * gen
        step -= (step @ kg) / (gen @ kg) * gen
        gnorm = float(np.sqrt(step @ (K @ step) + np.dot(W, step**2)))
        if gnorm0 is None:
            gnorm0 = gnorm
        if gnorm < tol * gnorm0:
            break
        w = w - dt * step
        w *= a / np.sqrt(np.dot(W, w * w))
    else:
        log.warning("normalized gradient flow hit max_iter=%d (gradient %.2e)", max_iter, gnorm / gnorm0)
    field = RadialField(grid, w)
    # final dilation onto the Pohozaev set, polished on the resampled integrals
    s = 0.0
    for _ in range(6):
        f = dilate(s, field)
        f = f * (a / np.sqrt(mass(f)))
        kin, q4 = dirichlet_energy(f), lp4(f)
        ds = np.log(4 * kin / (3 * mu * q4))
        s += ds
        if abs(ds) < 1e-13:
            break
    lam = (kin - mu * q4) / (a * a)
    return f, float(lam)


# -- symmetric curve ----------------------------------------------------------


def diagonal_grid(beta: float, a: float, mu: float = 1.0, h_scaled: float = 1e-3,
                  decay: float = 26.0) -> RadialGrid:
    """Grid adapted to the symmetric solution: radius ``decay`` decay lengths,
    spacing ``h_scaled`` in units of the decay length."""
    g = canonical_soliton().mass / ((mu + beta) * a * a)
    n = int(round(decay / h_scaled))
    return RadialGrid(decay / g, n)


def diagonal_curve(beta: float, a: float, mu: float = 1.0, grid: RadialGrid | None = None):
    """Symmetric solution (w, w) of the coupled system with u = v.

    u = v reduces the system to -Lap w - lam w = (mu + beta) w^3 with mass
    a^2, so w is the scalar ground state for the coupling mu + beta.  Solved
    by Newton on ``grid`` (default: ``diagonal_grid``).  Returns
    (StatePair, lam).
    """
    from .functionals import ProblemParams, StatePair

    if not mu + beta > 0:
        raise CurveUndefinedError(f"mu + beta = {mu + beta} must be positive")
    grid = grid or diagonal_grid(beta, a, mu)
    gs = ground_state_for_mass(a, mu + beta)
    w, lam = discrete_scalar_solve(grid, a, mu + beta, gs.profile(grid).values, gs.lam)
    return StatePair(w, w, ProblemParams.symmetric(a, beta, mu)), lam


def diagonal_level(beta: float, a: float, mu: float = 1.0) -> float:
    """Continuum energy of the symmetric solution, 2 l mu^2 / (mu + beta)^2."""
    if not mu + beta > 0:
        raise CurveUndefinedError(f"mu + beta = {mu + beta} must be positive")
    return 2 * ground_state_for_mass(a, mu).level * (mu / (mu + beta)) ** 2
