"""Critical points of J on the product of mass spheres.

* ``minimize_E``: preconditioned descent of the dilation-invariant functional
  E on the spheres, with Pohozaev projection after every step.
* ``collapse_detector``: recognizes the semitrivial alternative where one
  component spreads out (Dirichlet energy -> 0 at fixed mass) while the
  other approaches the scalar ground state.
* ``build_test_set``: images of spheres in finite-dimensional spaces of
  mean-zero radial functions under w -> (a w+/|w+|, a w-/|w-|) followed by the
  fiber projection; the maxima C_k bound the minimax levels from above.
* ``find_k_solutions``: deflated Newton multistart seeded by test-set maxima.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import eval_genlaguerre

from .functionals import (
    DegenerateStateError,
    DiagnosticsBundle,
    NotInEError,
    ProblemParams,
    StatePair,
    diagnostics,
    energy,
    integrals,
    morse_index,
    pohozaev_project,
    projected_energy,
    projected_gradient,
    retract,
)
from .grid import RadialField, RadialGrid, dirichlet_energy, interpolant, mass
from .newton import Deflation, continue_root, newton_solve
from .scalar import diagonal_curve, diagonal_level, ground_state_for_mass

__all__ = [
    "DegenerateStateError", "SolveConfig", "SolveReport", "retract", "minimize_E",
    "collapse_detector", "CollapseVerdict", "TestSet", "build_test_set", "find_k_solutions",
    "KSolveResult", "estimate_beta_k", "h1_distance", "sigma_distance", "genus_one_check",
    "resample_state", "polish", "Status", "default_grid", "solve_grid", "coarse_morse",
    "test_set_width", "bifurcation_root", "antisymmetric_threshold", "branch_grid",
]

log = logging.getLogger(__name__)


class Status:
    CONVERGED = "converged"
    COLLAPSED = "collapsed-semitrivial"
    MAX_ITER = "max-iter"
    LEFT_E = "left-E"
    # discrete root of the system that violates lam < 0 or the Pohozaev identity
    UNPHYSICAL = "unphysical-root"


@dataclass(frozen=True)
class SolveConfig:
    tol_grad: float = 1e-8
    max_iter: int = 400
    armijo: float = 1e-4
    shrink: float = 0.5
    deflation_radius: float = 1.0
    deflation_power: float = 2.0
    seed: int = 0
    frac_d12: float = 0.02
    dist_w0: float = 0.05
    tol_poh: float = 1e-8
    tol_mass: float = 1e-10
    newton_tol: float = 1e-10
    newton_max_iter: int = 80
    sep_min: float = 0.05
    morse_n: int = 400
    genus_delta: float = 0.05
    samples_per_dim: int = 12
    threads: int = 1
    batch: int = 4

    def __post_init__(self):
        for name in ("tol_grad", "tol_poh", "tol_mass", "newton_tol", "frac_d12", "dist_w0",
                     "deflation_radius", "sep_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.armijo <= 0.5:
            raise ValueError("Armijo constant must lie in (0, 1/2]")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.max_iter < 1 or self.threads < 1 or self.batch < 1:
            raise ValueError("iteration, thread and batch counts must be positive")


@dataclass
class SolveReport:
    state: StatePair
    energy: float
    diagnostics: DiagnosticsBundle
    morse: tuple[int, int] | None
    status: str
    iterations: int
    wall_time: float
    residual: float = float("nan")
    collapsed_component: str | None = None
    history: list = field(default_factory=list, repr=False)

    @property
    def beta(self) -> float:
        return self.state.params.beta

    @property
    def converged(self) -> bool:
        return self.status == Status.CONVERGED

    def summary(self) -> dict:
        d = self.diagnostics
        return {
            "beta": self.beta,
            "energy": self.energy,
            "lambda1": d.lambda1,
            "lambda2": d.lambda2,
            "pohozaev_residual": d.pohozaev_residual / d.kinetic if d.kinetic else d.pohozaev_residual,
            "grad_norm": d.grad_norm,
            "segregation": d.segregation,
            "morse_index_S": None if self.morse is None else self.morse[0],
            "morse_index_P": None if self.morse is None else self.morse[1],
            "status": self.status,
        }


# -- metrics ------------------------------------------------------------------


def _h1_sq(grid: RadialGrid, f: np.ndarray) -> float:
    return float(f @ (grid.stiffness @ f) + np.dot(grid.weights, f * f))


def h1_distance(x: StatePair, y: StatePair) -> float:
    g = x.grid
    return math.sqrt(_h1_sq(g, x.u.values - y.u.values) + _h1_sq(g, x.v.values - y.v.values))


def sigma_distance(x: StatePair, y: StatePair) -> float:
    """H^1 distance modulo the swap (u, v) -> (v, u)."""
    swapped = x.with_fields(x.v, x.u)
    return min(h1_distance(x, y), h1_distance(swapped, y))


def resample_state(state: StatePair, grid: RadialGrid) -> StatePair:
    """Interpolate both components onto another grid (zero beyond its support)."""
    out = []
    for f in (state.u, state.v):
        x = grid.nodes
        vals = np.zeros(grid.n)
        inside = x < f.grid.r_max
        vals[inside] = interpolant(f)(x[inside])
        out.append(RadialField(grid, vals))
    return StatePair(out[0], out[1], state.params)


# -- descent of E -------------------------------------------------------------


@dataclass(frozen=True)
class CollapseVerdict:
    fired: bool
    component: str | None
    dirichlet_ratio: float
    w0_distance: float

    def __bool__(self) -> bool:
        return self.fired


def _w0_distance(f: RadialField, a: float, mu: float) -> float:
    """Relative H^1 distance of f to the ground-state dilation with the same Dirichlet energy."""
    gs = ground_state_for_mass(a, mu)
    d = dirichlet_energy(f)
    if d <= 0:
        return math.inf
    c = math.sqrt(d / gs.kinetic)  # e^s
    w = c**1.5 * gs.profile_fn(c * f.grid.nodes)
    diff = f.values - w
    return math.sqrt(_h1_sq(f.grid, diff) / _h1_sq(f.grid, f.values))


def collapse_detector(trajectory, frac_d12: float = 0.02, dist_w0: float = 0.05,
                      tol_mass: float = 1e-8) -> CollapseVerdict:
    """Semitrivial collapse test on the first and last trajectory points.

    Fires when one component's Dirichlet energy has dropped below
    ``frac_d12`` of its initial value at pinned mass, while the other is
    within ``dist_w0`` (relative H^1) of a dilated scalar ground state.
    """
    if len(trajectory) < 2:
        raise ValueError("collapse detection needs at least two trajectory points")
    first, last = trajectory[0], trajectory[-1]
    p = last.params
    best = CollapseVerdict(False, None, math.inf, math.inf)
    for name, other, a, a_o, mu_o in (("v", "u", p.a2, p.a1, p.mu1), ("u", "v", p.a1, p.a2, p.mu2)):
        f0, f = getattr(first, name), getattr(last, name)
        d0 = dirichlet_energy(f0)
        ratio = dirichlet_energy(f) / d0 if d0 > 0 else math.inf
        pinned = abs(mass(f) - a * a) <= tol_mass * a * a
        dist = _w0_distance(getattr(last, other), a_o, mu_o)
        fired = pinned and ratio < frac_d12 and dist < dist_w0
        verdict = CollapseVerdict(fired, name if fired else None, ratio, dist)
        if fired:
            return verdict
        if ratio < best.dirichlet_ratio:
            best = CollapseVerdict(False, None, ratio, dist)
    return best


def _report(state: StatePair, status: str, iterations: int, t0: float, cfg: SolveConfig,
            lambdas=None, residual=float("nan"), collapsed=None, history=None,
            with_morse: bool = False) -> SolveReport:
    diag = diagnostics(state)
    if lambdas is not None:
        diag = replace(diag, lambda1=float(lambdas[0]), lambda2=float(lambdas[1]))
    morse = None
    if with_morse:
        try:
            morse = coarse_morse(state, cfg)
        except Exception as exc:  # report without Morse data rather than fail the solve
            log.warning("Morse index unavailable: %s", exc)
    return SolveReport(state, energy(state), diag, morse, status, iterations,
                       time.perf_counter() - t0, residual, collapsed, history or [])


def minimize_E(init: StatePair, cfg: SolveConfig = SolveConfig(), check_every: int = 10,
               keep_trajectory: bool = False) -> SolveReport:
    """Armijo descent of E over the spheres with Pohozaev projection.

    Each step: H^1 gradient of E at the projected iterate, tangent step,
    retraction to the spheres, projection to P.  Stops on a small gradient
    (relative to the initial one), on semitrivial collapse, on leaving the
    set where the quartic term is positive, or at ``max_iter``.
    """
    t0 = time.perf_counter()
    x = pohozaev_project(retract(init), cfg.tol_poh)
    e = projected_energy(x)
    traj = [x]
    g = projected_gradient(x)
    gn0 = g.h1_norm()
    xn = math.sqrt(_h1_sq(x.grid, x.u.values) + _h1_sq(x.grid, x.v.values))
    t = 0.1 * xn / gn0 if gn0 > 0 else 1.0
    history = [e]
    status = Status.MAX_ITER
    collapsed = None
    it = 0
    for it in range(1, cfg.max_iter + 1):
        gn = g.h1_norm()
        if gn <= cfg.tol_grad * gn0:
            status = Status.CONVERGED
            break
        accepted = False
        while t * gn > 1e-14 * xn:
            try:
                trial = x.with_fields(x.u.values - t * g.gu.values, x.v.values - t * g.gv.values)
                trial = pohozaev_project(retract(trial), cfg.tol_poh)
                e_trial = projected_energy(trial)
            except (NotInEError, DegenerateStateError):
                t *= cfg.shrink
                continue
            if e_trial <= e - cfg.armijo * t * gn * gn:
                accepted = True
                break
            t *= cfg.shrink
        if not accepted:
            status = Status.LEFT_E if _left_E(x, g, t) else Status.MAX_ITER
            break
        x, e = trial, e_trial
        history.append(e)
        t /= cfg.shrink
        if keep_trajectory:
            traj.append(x)
        if it % check_every == 0:
            verdict = collapse_detector([traj[0], x], cfg.frac_d12, cfg.dist_w0)
            if verdict:
                status, collapsed = Status.COLLAPSED, verdict.component
                break
        g = projected_gradient(x)
    if status in (Status.MAX_ITER, Status.CONVERGED) and it % check_every:
        # the endpoint may have collapsed since the last periodic check
        verdict = collapse_detector([traj[0], x], cfg.frac_d12, cfg.dist_w0)
        if verdict:
            status, collapsed = Status.COLLAPSED, verdict.component
    if keep_trajectory and traj[-1] is not x:
        traj.append(x)
    rep = _report(x, status, it, t0, cfg, collapsed=collapsed, history=history)
    if keep_trajectory:
        rep.trajectory = traj
    return rep


def _left_E(x: StatePair, g, t: float) -> bool:
    try:
        trial = retract(x.with_fields(x.u.values - t * g.gu.values, x.v.values - t * g.gv.values))
        return integrals(trial).quartic <= 0
    except DegenerateStateError:
        return True


def genus_one_check(state: StatePair, eps: float | None = None) -> dict:
    """Sublevel dichotomy near the level l for nonnegative states.

    d_u = |u - w0|_{H1} + |v|_{D12},  d_v = |v - w0|_{H1} + |u|_{D12}.  With eps at
    most half of |w0|_{D12} the two alternatives exclude each other by the
    triangle inequality; ``exactly_one`` records whether precisely one holds.
    """
    p, g = state.params, state.grid
    out = {}
    norms = []
    for name, other, a, mu in (("u", "v", p.a1, p.mu1), ("v", "u", p.a2, p.mu2)):
        w0 = ground_state_for_mass(a, mu).profile(g).values
        near = math.sqrt(_h1_sq(g, getattr(state, name).values - w0))
        far = math.sqrt(dirichlet_energy(getattr(state, other)))
        out[f"d_{name}"] = near + far
        norms.append(math.sqrt(dirichlet_energy(RadialField(g, w0))))
    eps = 0.5 * min(norms) if eps is None else eps
    hits = [out["d_u"] < eps, out["d_v"] < eps]
    out.update(eps=eps, alternatives=int(sum(hits)), exactly_one=sum(hits) == 1)
    return out


# -- test sets ----------------------------------------------------------------


def _radial_bumps(k: int, width: float):
    """Radial oscillator functions L_j^{1/2}(r^2/w^2) exp(-r^2/2w^2), j = 0..k."""

    def bump(j):
        return lambda r: eval_genlaguerre(j, 0.5, (r / width) ** 2) * np.exp(-0.5 * (r / width) ** 2)

    return [bump(j) for j in range(k + 1)]


def _mean_zero_basis(k: int, width: float, grid: RadialGrid):
    """Nested L2-orthonormal basis (callables + coefficient matrix) of a k-dim
    space of mean-zero radial functions."""
    bumps = _radial_bumps(k, width)
    W = grid.weights
    vals = np.array([b(grid.nodes) for b in bumps])
    means = vals @ W
    # e_j = b_j - (m_j / m_0) b_0 has zero mean; Gram-Schmidt keeps the spaces nested
    raw = np.zeros((k, k + 1))
    for j in range(1, k + 1):
        raw[j - 1, j] = 1.0
        raw[j - 1, 0] = -means[j] / means[0]
    coef = np.zeros_like(raw)
    for j in range(k):
        c = raw[j].copy()
        for i in range(j):
            c -= ((coef[i] @ vals) * (c @ vals) @ W) * coef[i]
        c /= math.sqrt(((c @ vals) ** 2) @ W)
        coef[j] = c
    return bumps, coef


def _sphere_points(k: int, m: int, seed: int) -> np.ndarray:
    """Quasi-uniform points on the unit sphere of R^k, closed under negation and
    nested in k (points for k-1 are embedded as the first rows)."""
    if k == 1:
        return np.array([[1.0], [-1.0]])
    prev = _sphere_points(k - 1, m, seed)
    prev = np.hstack([prev, np.zeros((len(prev), 1))])
    if k == 2:
        ang = np.pi * np.arange(m) / m
        half = np.column_stack([np.cos(ang), np.sin(ang)])
        half = half[1:]  # angle 0 is already embedded
    else:
        rng = np.random.default_rng([seed, k])
        half = rng.standard_normal((m ** (k - 1) // 2, k))
        half[:, -1] = np.abs(half[:, -1]) + 1e-3
        half /= np.linalg.norm(half, axis=1, keepdims=True)
    return np.vstack([prev, half, -half])


@dataclass
class TestSet:
    k: int
    coefficients: np.ndarray
    states: list
    values: np.ndarray
    s_values: np.ndarray

    @property
    def upper_bound(self) -> float:
        """C_k: maximum of J over the sampled image."""
        return float(np.max(self.values))

    def argmax(self) -> StatePair:
        return self.states[int(np.argmax(self.values))]

    def top(self, count: int) -> list:
        order = np.argsort(-self.values, kind="stable")
        return [self.states[i] for i in order[:count]]


def test_set_width(a: float, mu: float = 1.0) -> float:
    """Bump width matched to the decay length of the scalar ground state."""
    return 2.0 / ground_state_for_mass(a, mu).gamma


def build_test_set(k: int, samples_per_dim: int, seed: int, params: ProblemParams,
                   grid: RadialGrid, width: float | None = None) -> TestSet:
    """Sampled psi(T) for a k-dimensional space of mean-zero radial functions.

    phi(w) = (a1 w+/|w+|, a2 w-/|w-|) has disjoint supports, so the fiber
    parameter and J are independent of beta.  The dilation is applied by
    evaluating the analytic basis at e^s r (no resampling) followed by a
    mass restoration and the Pohozaev polish.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    width = width or test_set_width(params.a1, params.mu1)
    bumps, coef = _mean_zero_basis(k, width, grid)
    pts = _sphere_points(k, max(samples_per_dim, 2), seed)
    r = grid.nodes

    def w_at(c, x):
        vals = np.array([b(x) for b in bumps])
        return (c @ coef) @ vals

    def psi_at(c, s):
        ws = w_at(c, np.exp(s) * r)
        return retract(StatePair.from_arrays(grid, np.maximum(ws, 0.0), np.maximum(-ws, 0.0), params))

    def defect(c, s):
        it = integrals(psi_at(c, s))
        return (it.kinetic - 0.75 * it.quartic) / it.kinetic

    states, values, svals = [], [], []
    for c in pts:
        w = w_at(c, r)
        wp, wm = np.maximum(w, 0.0), np.maximum(-w, 0.0)
        if not (np.any(wp > 0) and np.any(wm > 0)):
            raise DegenerateStateError("mean-zero sample lost a sign part")
        it = integrals(retract(StatePair.from_arrays(grid, wp, wm, params)))
        # continuum shift law as the first guess, then a bracketed root of
        # the discrete Pohozaev defect, which decreases in s (the dilation stays analytic)
        s0 = float(np.log(4 * it.kinetic / (3 * it.quartic)))
        lo, hi = s0 - 0.05, s0 + 0.05
        try:
            for _ in range(8):
                if defect(c, lo) >= 0:
                    break
                lo -= 0.5
            for _ in range(8):
                if defect(c, hi) <= 0:
                    break
                hi += 0.5
            if defect(c, lo) < 0 or defect(c, hi) > 0:
                raise DegenerateStateError("no sign change of the Pohozaev defect")
        except DegenerateStateError as exc:
            raise DegenerateStateError(f"test-set sample not resolvable on this grid ({exc})") from None
        s = brentq(lambda t: defect(c, t), lo, hi, xtol=1e-14, rtol=1e-14)
        psi = psi_at(c, s)
        states.append(psi)
        values.append(energy(psi))
        svals.append(s)
    return TestSet(k, pts, states, np.array(values), np.array(svals))


def estimate_beta_k(k: int, a: float, mu: float = 1.0, c_next: float | None = None,
                    grid: RadialGrid | None = None, samples_per_dim: int = 12, seed: int = 0,
                    tol: float = 1e-4) -> float:
    """Surrogate for beta_k: the beta in (-1, 0) where C_{k+1} meets the symmetric level.

    Bisection on 2 l / (1 + beta)^2 = C_{k+1}; C_{k+1} >= c_{k+1} makes this
    a conservative (upper) estimate.
    """
    if c_next is None:
        grid = grid or default_grid(a, mu)
        c_next = build_test_set(k + 1, samples_per_dim, seed, ProblemParams.symmetric(a, -1.0, mu),
                                grid).upper_bound
    lo, hi = -1.0 + 1e-12, 0.0

    def f(b):
        return diagonal_level(b, a, mu) - c_next

    if f(hi) >= 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def default_grid(a: float, mu: float = 1.0, decay: float = 40.0, n: int = 2000) -> RadialGrid:
    """Grid spanning ``decay`` ground-state decay lengths."""
    return RadialGrid(decay / ground_state_for_mass(a, mu).gamma, n)


# -- Newton multistart ---------------------------------------------------------


def coarse_morse(state: StatePair, cfg: SolveConfig) -> tuple[int, int]:
    """Morse indices from a dense eigen-solve on a grid of ``cfg.morse_n`` nodes.

    Large grids are first re-solved on the coarse grid by Newton from the
    interpolated state, so the count refers to the coarse critical point.
    """
    st = state
    if state.grid.n > cfg.morse_n:
        coarse = RadialGrid(state.grid.r_max, cfg.morse_n)
        res = newton_solve(retract(resample_state(state, coarse)), tol=1e-9, max_iter=40)
        if not res.converged:
            raise RuntimeError("coarse re-solve for the Morse index did not converge")
        st = res.state
        md = morse_index(st, lambdas=res.lambdas)
    else:
        md = morse_index(st)
    return md.index_S, md.index_P


def polish(state: StatePair, cfg: SolveConfig = SolveConfig(), lambdas=None,
           deflation: Deflation | None = None, with_morse: bool = True) -> SolveReport:
    """Newton solve from ``state`` and package the result as a report."""
    t0 = time.perf_counter()
    res = newton_solve(state, lambdas, cfg.newton_tol, cfg.newton_max_iter, deflation, max_step=0.5)
    st = res.state
    l1, l2 = res.lambdas
    ok = res.converged and l1 < 0 and l2 < 0
    if ok:
        it = integrals(st)
        ok = abs(it.kinetic - 0.75 * it.quartic) <= 1e-6 * it.kinetic
    if ok:
        status = Status.CONVERGED
    else:
        status = Status.UNPHYSICAL if res.converged else Status.MAX_ITER
    return _report(st, status, res.iterations, t0, cfg, lambdas=(l1, l2), residual=res.residual,
                   history=res.history, with_morse=with_morse and ok)


@dataclass
class KSolveResult:
    reports: list
    level_search: SolveReport | None
    requested: int
    attempts: int
    test_bounds: dict
    rejected: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return len(self.reports) < self.requested


def _is_new(st: StatePair, found: list, sep: float) -> bool:
    def on(g):
        return st if st.grid.same_as(g) else resample_state(st, g)
    return all(sigma_distance(on(r.state.grid), r.state) >= sep for r in found)


def find_k_solutions(k: int, beta: float, cfg: SolveConfig = SolveConfig(), a: float = 4.0,
                     mu: float = 1.0, grid: RadialGrid | None = None,
                     explore_grid: RadialGrid | None = None, seeds: list | None = None,
                     level_search: bool = True, max_seeds: int = 24,
                     bifurcation: bool = True) -> KSolveResult:
    """Up to k distinct solution pairs at coupling beta (symmetric masses).

    Seeds are the largest values of J on the test sets of dimension 2..k+1
    (the dimension-1 maximum is the natural c_1 seed and is tried first).
    Each seed is solved by deflated Newton on ``explore_grid``, the roots
    found so far (and their swapped copies) being deflated; converged roots
    are then refined by plain Newton on ``grid``.  Seeds run in fixed-size
    batches: all solves in a batch see the roots found in earlier batches,
    so the result does not depend on the number of threads.

    When seeds run out, branches bifurcating from the diagonal curve are
    tried (``bifurcation_root``).  Discrete roots that violate lam < 0 or
    the Pohozaev identity are returned in ``rejected``, not as solutions.
    """
    params = ProblemParams.symmetric(a, beta, mu)
    grid = grid or solve_grid(a, mu)
    explore_grid = explore_grid or RadialGrid(grid.r_max, min(grid.n, 1500))
    level = ground_state_for_mass(a, mu).level
    bounds = {}
    level_rep = None
    if level_search:
        ts1 = build_test_set(1, 2, cfg.seed, params, explore_grid)
        level_rep = minimize_E(ts1.states[0], cfg)
    if seeds is None:
        seeds = []
        for dim in range(1, k + 2):
            ts = build_test_set(dim, cfg.samples_per_dim, cfg.seed, params, explore_grid)
            bounds[dim] = ts.upper_bound
            seeds.extend(ts.top(max(2, max_seeds // (k + 1))))
    else:
        seeds = [s if s.grid.same_as(explore_grid) else retract(resample_state(s, explore_grid))
                 for s in seeds]
    seeds = [s.with_params(params) for s in seeds[:max_seeds]]
    found: list[SolveReport] = []
    sep = cfg.sep_min * a
    attempts = 0
    coarse_cfg = replace(cfg, newton_tol=max(cfg.newton_tol, 1e-9))

    def run(seed_state, roots):
        defl = Deflation(cfg.deflation_radius * a, cfg.deflation_power, True, list(roots))
        return polish(seed_state, coarse_cfg, deflation=defl, with_morse=False)

    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for start in range(0, len(seeds), cfg.batch):
            if len(found) >= k:
                break
            batch = seeds[start:start + cfg.batch]
            roots = []
            for r in found:
                roots.append(resample_state(r.state, explore_grid).stacked())
                roots.append(resample_state(r.state.swapped(), explore_grid).stacked())
            runner = pool.map if pool else map
            coarse = list(runner(lambda s: run(s, roots), batch))
            attempts += len(batch)
            for rep in coarse:
                if not rep.converged or len(found) >= k:
                    continue
                if rep.energy < (1 + 0.05) * level:
                    continue  # semitrivial (w0, ~0)-type roots are not sought here
                fine = polish(retract(resample_state(rep.state, grid)), cfg)
                if fine.converged and _is_new(fine.state, found, sep):
                    found.append(fine)
    finally:
        if pool:
            pool.shutdown()
    rejected: list[SolveReport] = []
    if bifurcation:
        for mode in range(1, k + 1):
            if len(found) >= k:
                break
            attempts += 1
            rep = bifurcation_root(beta, a, mu, mode, cfg=cfg)
            if rep is None:
                continue
            if rep.converged and _is_new(rep.state, found, sep):
                found.append(rep)
            elif not rep.converged:
                rejected.append(rep)
    found.sort(key=lambda r: (r.energy, -r.diagnostics.lambda1))
    return KSolveResult(found, level_rep, k, attempts, bounds, rejected)


def _antisymmetric_modes(beta: float, a: float, mu: float, grid: RadialGrid):
    """Constrained spectrum of the diagonal Hessian on directions (phi, -phi).

    Returns ascending eigenvalues and the L^2-normalized eigenfunctions,
    restricted to mass-tangent phi (orthogonal to the diagonal profile).
    """
    st, lam = diagonal_curve(beta, a, mu, grid)
    w, W = st.u.values, grid.weights
    K = grid.stiffness.toarray()
    H = K - np.diag(W * (lam + (3 * mu - beta) * w**2))
    s = 1 / np.sqrt(W)
    Hs = H * s[:, None] * s[None, :]
    q, _ = np.linalg.qr((W * w * s)[:, None], mode="complete")
    Z = q[:, 1:]
    ev, V = np.linalg.eigh(Z.T @ Hs @ Z)
    modes = s[:, None] * (Z @ V)
    modes /= np.sqrt(W @ modes**2)[None, :]
    return ev, modes


def antisymmetric_threshold(mode: int, a: float, mu: float = 1.0, grid: RadialGrid | None = None,
                            tol: float = 1e-3) -> float:
    """Coupling at which antisymmetric eigenvalue ``mode`` of the diagonal crosses zero.

    Mode 0 is the relative dilation, negative for every beta.  Returns nan
    when the eigenvalue stays positive on [-0.95, 0).
    """
    grid = grid or RadialGrid(24.0 / ground_state_for_mass(a, mu).gamma, 600)
    f = lambda b: _antisymmetric_modes(b, a, mu, grid)[0][mode]
    hi, lo = -1e-3, -0.95
    if f(hi) < 0:
        return hi
    if f(lo) > 0:
        return math.nan
    while hi - lo > tol:
        mid = 0.5 * (hi + lo)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return lo


def bifurcation_root(beta: float, a: float = 4.0, mu: float = 1.0, mode: int = 1,
                     grid: RadialGrid | None = None, cfg: SolveConfig = SolveConfig(),
                     offset: float = 0.03, amplitudes=(0.5, 2.0, 1.0, 0.25),
                     with_morse: bool = True) -> SolveReport | None:
    """Non-diagonal root on the branch bifurcating from the diagonal curve.

    Past the threshold of antisymmetric mode ``mode`` the diagonal solution
    is perturbed along that mode (L^2 amplitudes tried in turn), a deflated Newton solve (diagonal
    deflated) finds the bifurcated root, and natural continuation in beta
    carries it to ``beta``.  Returns None when no branch exists at ``beta``
    or a solve fails.
    """
    grid = grid or branch_grid(a, mu)
    coarse = RadialGrid(grid.r_max, min(grid.n, 1200))
    b_star = antisymmetric_threshold(mode, a, mu)
    if not math.isfinite(b_star) or beta > b_star - offset:
        return None
    b0 = b_star - offset
    ev, modes = _antisymmetric_modes(b0, a, mu, coarse)
    diag, lam = diagonal_curve(b0, a, mu, coarse)
    w = diag.u.values
    phi = modes[:, mode]
    for amp in amplitudes:
        defl = Deflation(cfg.deflation_radius * a, cfg.deflation_power)
        defl.add(diag)
        res = newton_solve(retract(diag.with_fields(w + amp * phi, w - amp * phi)), (lam, lam),
                           1e-9, 100, defl, max_step=0.3)
        if res.converged and sigma_distance(res.state, diag) >= cfg.sep_min * a:
            break
    else:
        return None
    fine = retract(resample_state(res.state, grid))
    res = newton_solve(fine, res.lambdas, cfg.newton_tol, cfg.newton_max_iter)
    if not res.converged:
        return None
    res = continue_root(res.state, res.lambdas, beta, tol=cfg.newton_tol)
    if not res.converged:
        return None
    return polish(res.state, cfg, res.lambdas, with_morse=with_morse)


def branch_grid(a: float, mu: float = 1.0, decay: float = 23.6, n: int = 4000) -> RadialGrid:
    """Grid for excited branches; their spread tails need a wider ball than the ground state."""
    return RadialGrid(decay / ground_state_for_mass(a, mu).gamma, n)


def solve_grid(a: float, mu: float = 1.0, decay: float = 26.0, h_scaled: float = 1e-3) -> RadialGrid:
    """Fine grid on which discrete solutions satisfy the Pohozaev identity to ~1e-6."""
    gamma = ground_state_for_mass(a, mu).gamma
    return RadialGrid(decay / gamma, int(round(decay / h_scaled)))
