"""Continuation of solution branches toward strong competition (beta -> -inf).

Along a branch the overlap of the two components is tracked by the
segregation integral, the measure of the common positivity set and the
residual of the limit equation satisfied by w = u - v.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .functionals import StatePair, solve_h1
from .grid import RadialField, h1_norm
from .newton import continue_root
from .sphere_opt import SolveConfig, SolveReport, Status, collapse_detector, polish

__all__ = [
    "SweepRecord", "Branch", "EmptyBranchError", "FitRefusedError", "RateFit",
    "continue_branch", "limit_equation_residual", "overlap_measure", "segregation_rate_fit",
    "consistency_flag",
]

log = logging.getLogger(__name__)

OVERLAP_THRESHOLD = 1e-3


class EmptyBranchError(RuntimeError):
    """The first continuation step failed."""


class FitRefusedError(ValueError):
    """Too few records, or a coupling span below one decade."""


@dataclass
class SweepRecord:
    branch_id: str
    beta: float
    energy: float
    lambda1: float
    lambda2: float
    segregation: float
    limit_residual: float
    hausdorff_overlap: float
    status: str
    state_ref: StatePair = field(repr=False)
    threshold: float = OVERLAP_THRESHOLD

    def row(self) -> dict:
        return {
            "branch_id": self.branch_id, "beta": self.beta, "energy": self.energy,
            "lambda1": self.lambda1, "lambda2": self.lambda2, "segregation": self.segregation,
            "limit_residual": self.limit_residual, "overlap": self.hausdorff_overlap,
        }


class Branch(list):
    """Records of one branch in continuation order, with termination data."""

    def __init__(self, records=(), branch_id: str = "b0"):
        super().__init__(records)
        self.branch_id = branch_id
        self.termination: str | None = None
        self.lipschitz = 0.0

    @property
    def complete(self) -> bool:
        return self.termination is None


def limit_equation_residual(state: StatePair, lambdas: tuple[float, float], norm: str = "dual") -> float:
    """Residual of -Lap w - l1 w+ + l2 w- = mu1 (w+)^3 - mu2 (w-)^3 for w = u - v, over |w|_{H^1}.

    ``norm="dual"`` measures the weak residual in the discrete H^{-1} norm
    (the dual of the quadrature H^1 norm); ``norm="l2"`` measures the strong
    residual in the quadrature L^2 norm.  The L^2 value is dominated by the
    coupling term beta u v (v - u) in the thin interface layer and need not
    decrease as beta -> -inf.
    """
    p, g = state.params, state.grid
    w = (state.u - state.v).values
    wp, wm = np.maximum(w, 0.0), np.maximum(-w, 0.0)
    l1, l2 = lambdas
    weak = g.stiffness @ w - g.weights * (l1 * wp - l2 * wm + p.mu1 * wp**3 - p.mu2 * wm**3)
    wn = h1_norm(RadialField(g, w))
    if wn == 0:
        return math.inf
    if norm == "dual":
        val = math.sqrt(max(float(weak @ solve_h1(g, weak)), 0.0))
    elif norm == "l2":
        val = math.sqrt(float(np.dot(weak * weak, 1 / g.weights)))
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return val / wn


def overlap_measure(state: StatePair, threshold: float = OVERLAP_THRESHOLD) -> float:
    """Volume of {u > t max u} intersected with {v > t max v}."""
    u, v = state.u.values, state.v.values
    both = (u > threshold * u.max()) & (v > threshold * v.max())
    return float(np.sum(state.grid.weights[both]))


def _record(branch_id: str, rep: SolveReport) -> SweepRecord:
    d = rep.diagnostics
    lams = (d.lambda1, d.lambda2)
    return SweepRecord(branch_id, rep.beta, rep.energy, d.lambda1, d.lambda2, d.segregation,
                       limit_equation_residual(rep.state, lams), overlap_measure(rep.state),
                       rep.status, rep.state)


def continue_branch(start: SolveReport, betas, cfg: SolveConfig = SolveConfig(),
                    branch_id: str = "b0", with_morse: bool = False) -> Branch:
    """Warm-started re-solves of ``start`` at each coupling in ``betas``.

    ``start`` must be a discrete root (status converged, or a root rejected
    only for its multiplier signs); each target is reached by natural
    continuation with adaptive steps, each warm start Pohozaev-projected
    at its new coupling.  The branch stops with a labeled
    reason at the first failure.
    """
    if start.status not in (Status.CONVERGED, Status.UNPHYSICAL):
        raise ValueError(f"continuation needs a solved start, got status {start.status!r}")
    betas = [float(b) for b in betas]
    if any(b >= start.beta for b in betas[:1]) or any(b2 >= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("betas must descend strictly from the start coupling")
    d = start.diagnostics
    x, lams = start.state, (d.lambda1, d.lambda2)
    branch = Branch([_record(branch_id, start)], branch_id)
    for beta in betas:
        res = continue_root(x, lams, beta, tol=cfg.newton_tol, project=True)
        if not res.converged:
            branch.termination = f"non-convergence at beta={beta:g}"
            break
        rep = polish(res.state, cfg, res.lambdas, with_morse=with_morse)
        if rep.status not in (Status.CONVERGED, Status.UNPHYSICAL):
            branch.termination = f"non-convergence at beta={beta:g}"
            break
        if collapse_detector([start.state, rep.state], cfg.frac_d12, cfg.dist_w0):
            branch.termination = f"collapse at beta={beta:g}"
            break
        prev = branch[-1]
        rec = _record(branch_id, rep)
        branch.lipschitz = max(branch.lipschitz, abs(rec.energy - prev.energy) / abs(rec.beta - prev.beta))
        branch.append(rec)
        x, lams = rep.state, (rep.diagnostics.lambda1, rep.diagnostics.lambda2)
    if len(branch) == 1:
        raise EmptyBranchError(branch.termination or "no continuation step succeeded")
    if branch.termination:
        log.warning("branch %s terminated: %s", branch_id, branch.termination)
    return branch


@dataclass(frozen=True)
class RateFit:
    exponent: float
    intercept: float
    residual: float
    suspicious: bool


def segregation_rate_fit(records) -> RateFit:
    """Least-squares slope of log(segregation) against log|beta|.

    Flagged suspicious when the slope is negligible, meaning the components
    are not separating.
    """
    recs = [r for r in records if r.beta < 0 and r.segregation > 0]
    if len(recs) < 4:
        raise FitRefusedError(f"need at least 4 records with positive segregation, got {len(recs)}")
    x = np.log([-r.beta for r in recs])
    if x.max() - x.min() < math.log(10) * (1 - 1e-12):
        raise FitRefusedError("|beta| must span at least one decade")
    y = np.log([r.segregation for r in recs])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return RateFit(float(coef[0]), float(coef[1]), resid, abs(coef[0]) < 0.05)


def consistency_flag(records, decay: float = 0.5) -> bool:
    """True when segregation and overlap do not decay together (a solver artifact).

    Each quantity counts as decaying when its last value is below ``decay``
    times its first.
    """
    if len(records) < 2:
        return False
    first, last = records[0], records[-1]
    seg = last.segregation < decay * first.segregation
    ovl = last.hausdorff_overlap < decay * first.hausdorff_overlap
    return seg != ovl
