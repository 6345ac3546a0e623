"""Command line entry point: ground | solve | sweep | testset | validate.

Exit codes: 0 success, 1 solver or validation failure, 2 malformed
configuration, 3 partial results.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as nio
from .functionals import StatePair, diagnostics
from .grid import RadialField, RadialGrid
from .scalar import canonical_soliton, discrete_ground_state, ground_state_for_mass, write_golden

log = logging.getLogger("normnls")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3


def _say(args, *parts) -> None:
    if not args.quiet:
        print(*parts)


def _grid_dict(g: RadialGrid) -> dict:
    return {"r_max": g.r_max, "n": g.n}


def _l2_gap(state: StatePair) -> float:
    d = state.u.values - state.v.values
    return float(math.sqrt(np.dot(state.grid.weights, d * d)))


def _result_row(branch_id: str, rep, a: float) -> dict:
    row = {"branch_id": branch_id} | rep.summary()
    gap = _l2_gap(rep.state)
    row.update(l2_gap=gap, u_ne_v=bool(gap > 0.1 * a), residual=rep.residual,
               grid=_grid_dict(rep.state.grid))
    return row


# -- commands -------------------------------------------------------------------


def cmd_ground(cfg: nio.RunConfig, out: Path, args) -> int:
    from .plotting import plot_profiles

    t0 = time.perf_counter()
    sol = canonical_soliton()
    gs = ground_state_for_mass(cfg.a, cfg.mu)
    poh = abs(gs.pohozaev_residual) / gs.kinetic
    golden = sol.goldens(1.0, 1.0)
    write_golden(out / "soliton_golden.txt", golden)
    grid = cfg.grid or RadialGrid(26.0 / gs.gamma, 4000)
    w, lam_h = discrete_ground_state(grid, cfg.a, cfg.mu)
    pair = StatePair(w, RadialField(grid, np.zeros(grid.n)), cfg.params)
    nio.write_profile(out / "profile_w0.txt", pair)
    plot_profiles(out / "profile_w0.png", [pair], ["w0"], r_cut=12.0 / gs.gamma)
    _say(args, f"Q(0)          = {sol.q0:.15g}")
    _say(args, f"mass Q        = {sol.mass:.15g}")
    _say(args, f"dirichlet Q   = {sol.dirichlet:.15g}")
    _say(args, f"a = {cfg.a:g}  mu = {cfg.mu:g}")
    _say(args, f"gamma         = {gs.gamma:.15g}")
    _say(args, f"lambda        = {gs.lam:.15g}")
    _say(args, f"ell           = {gs.level:.15g}")
    _say(args, f"pohozaev rel  = {poh:.3e}")
    row = {"branch_id": "w0", "beta": None, "energy": gs.level, "lambda1": gs.lam, "lambda2": None,
           "pohozaev_residual": poh, "grad_norm": None, "segregation": None, "morse_index_S": None,
           "morse_index_P": None, "status": "converged" if poh < 1e-8 else "failed",
           "gamma": gs.gamma, "discrete_lambda": lam_h}
    doc = nio.report_document("ground", cfg.params.as_dict(), _grid_dict(grid), [row],
                              {"wall_time": time.perf_counter() - t0}, extra={"golden": golden})
    nio.write_report(out / "report.json", doc)
    return EXIT_OK if poh < 1e-8 else EXIT_FAIL


def cmd_solve(cfg: nio.RunConfig, out: Path, args) -> int:
    from .plotting import plot_profiles
    from .sphere_opt import find_k_solutions, solve_grid

    t0 = time.perf_counter()
    grid = cfg.grid or solve_grid(cfg.a, cfg.mu)
    res = find_k_solutions(cfg.k, cfg.beta, cfg.solver, cfg.a, cfg.mu, grid=grid)
    rows, timing, states, labels = [], {}, [], []
    for prefix, reps in (("s", res.reports), ("r", res.rejected)):
        for i, rep in enumerate(reps):
            bid = f"{prefix}{i}"
            rows.append(_result_row(bid, rep, cfg.a))
            timing[bid] = rep.wall_time
            d = rep.diagnostics
            nio.save_archive(out / f"solution_{bid}.npz", rep.state, (d.lambda1, d.lambda2))
            nio.write_profile(out / f"profile_{bid}.txt", rep.state)
            states.append(rep.state)
            labels.append(bid)
    if states:
        plot_profiles(out / "profiles.png", states, labels)
    status = "partial" if res.partial else "complete"
    extra = {"requested": cfg.k, "found": len(res.reports), "attempts": res.attempts,
             "test_bounds": {str(k): v for k, v in res.test_bounds.items()}}
    if res.level_search is not None:
        ls = res.level_search
        extra["level_search"] = {"energy": ls.energy, "status": ls.status,
                                 "collapsed_component": ls.collapsed_component,
                                 "ell": ground_state_for_mass(cfg.a, cfg.mu).level}
    timing["wall_time"] = time.perf_counter() - t0
    doc = nio.report_document("solve", cfg.params.as_dict(), _grid_dict(grid), rows, timing, status, extra)
    nio.write_report(out / "report.json", doc)
    ell = ground_state_for_mass(cfg.a, cfg.mu).level
    _say(args, f"beta = {cfg.beta:g}: {len(res.reports)} of {cfg.k} solutions, "
               f"{len(res.rejected)} rejected roots")
    for r in rows:
        _say(args, f"  {r['branch_id']}: J/ell = {r['energy'] / ell:.6f}  lambda = "
                   f"({r['lambda1']:.5g}, {r['lambda2']:.5g})  {r['status']}")
    return EXIT_PARTIAL if res.partial else EXIT_OK


def cmd_sweep(cfg: nio.RunConfig, out: Path, args) -> int:
    from .beta_study import EmptyBranchError, FitRefusedError, continue_branch, segregation_rate_fit
    from .plotting import plot_branch, plot_profiles
    from .sphere_opt import Status, bifurcation_root, branch_grid

    t0 = time.perf_counter()
    grid = cfg.grid or branch_grid(cfg.a, cfg.mu)
    start = bifurcation_root(cfg.sweep_start, cfg.a, cfg.mu, 1, grid, cfg.solver, with_morse=False)
    if start is None:
        print(f"no bifurcated branch found at beta = {cfg.sweep_start:g}", file=sys.stderr)
        return EXIT_FAIL
    try:
        branch = continue_branch(start, [b for b in cfg.sweep_betas if b < cfg.sweep_start], cfg.solver)
    except EmptyBranchError as exc:
        print(f"continuation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    rows = []
    for rec in branch:
        d = diagnostics(rec.state_ref)
        rd = d.kinetic and d.pohozaev_residual / d.kinetic
        rows.append({"branch_id": rec.branch_id, "beta": rec.beta, "energy": rec.energy,
                     "lambda1": rec.lambda1, "lambda2": rec.lambda2, "pohozaev_residual": rd,
                     "grad_norm": d.grad_norm, "segregation": rec.segregation, "morse_index_S": None,
                     "morse_index_P": None, "status": rec.status, "limit_residual": rec.limit_residual,
                     "overlap": rec.hausdorff_overlap})
        nio.write_profile(out / f"profile_beta{rec.beta:g}.txt", rec.state_ref)
    nio.write_sweep_csv(out / "sweep.csv", [r.row() for r in branch])
    betas = [r.beta for r in branch]
    plot_branch(out / "energy.png", betas, [r.energy for r in branch], "J")
    plot_branch(out / "segregation.png", betas, [r.segregation for r in branch], "int u^2 v^2", logy=True)
    plot_profiles(out / "profiles.png", [branch[0].state_ref, branch[-1].state_ref],
                  [f"beta={betas[0]:g}", f"beta={betas[-1]:g}"])
    extra = {"termination": branch.termination, "lipschitz": branch.lipschitz}
    try:
        fit = segregation_rate_fit(branch)
        extra["segregation_fit"] = {"exponent": fit.exponent, "residual": fit.residual,
                                    "suspicious": bool(fit.suspicious)}
    except FitRefusedError as exc:
        extra["segregation_fit"] = {"refused": str(exc)}
    partial = branch.termination is not None or any(r.status != Status.CONVERGED for r in branch)
    doc = nio.report_document("sweep", cfg.params.as_dict(), _grid_dict(grid), rows,
                              {"wall_time": time.perf_counter() - t0},
                              "partial" if partial else "complete", extra)
    nio.write_report(out / "report.json", doc)
    for r in branch:
        _say(args, f"beta = {r.beta:8g}  J = {r.energy:.6g}  seg = {r.segregation:.4g}  "
                   f"lambda = ({r.lambda1:.5g}, {r.lambda2:.5g})  {r.status}")
    if branch.termination:
        _say(args, f"branch terminated: {branch.termination}")
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_testset(cfg: nio.RunConfig, out: Path, args) -> int:
    from .functionals import ProblemParams
    from .sphere_opt import build_test_set, default_grid

    t0 = time.perf_counter()
    grid = cfg.grid or default_grid(cfg.a, cfg.mu)
    ell = ground_state_for_mass(cfg.a, cfg.mu).level
    rows, bounds, ok = [], {}, True
    for k in range(1, cfg.k + 1):
        sets = [build_test_set(k, cfg.solver.samples_per_dim, cfg.solver.seed,
                               ProblemParams.symmetric(cfg.a, b, cfg.mu), grid) for b in cfg.testset_betas]
        vals = [ts.values for ts in sets]
        spread = max(float(np.max(np.abs(v - vals[0]))) for v in vals) / float(np.max(np.abs(vals[0])))
        ck = sets[0].upper_bound
        bounds[k] = ck
        good = math.isfinite(ck) and spread <= 1e-10 and ck >= ell
        ok &= good
        rows.append({"branch_id": f"C{k}", "beta": cfg.testset_betas[0], "energy": ck, "lambda1": None,
                     "lambda2": None, "pohozaev_residual": None, "grad_norm": None, "segregation": 0.0,
                     "morse_index_S": None, "morse_index_P": None, "status": "bound" if good else "failed",
                     "beta_spread": spread, "samples": len(sets[0].values)})
        _say(args, f"C_{k} = {ck:.10g}  (= {ck / ell:.4f} ell)  beta spread {spread:.2e}")
    mono = all(bounds[k] <= bounds[k + 1] for k in range(1, cfg.k))
    ok &= mono
    _say(args, f"nondecreasing in k: {mono}")
    doc = nio.report_document("testset", cfg.params.as_dict(), _grid_dict(grid), rows,
                              {"wall_time": time.perf_counter() - t0},
                              "complete" if ok else "failed", {"ell": ell})
    nio.write_report(out / "report.json", doc)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_validate(cfg: nio.RunConfig, out: Path, args) -> int:
    from .validation import run_all

    t0 = time.perf_counter()
    checks = run_all(seed=cfg.solver.seed, echo=None if args.quiet else print)
    rows = [{"name": c.name, "passed": c.passed, "detail": c.detail, "seconds": c.seconds}
            for c in checks]
    doc = {"schema_version": nio.SCHEMA_VERSION, "command": "validate", "checks": rows,
           "timing": {"wall_time": time.perf_counter() - t0}}
    nio.write_report(out / "report.json", doc)
    failed = [c.name for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"ground": cmd_ground, "solve": cmd_solve, "sweep": cmd_sweep, "testset": cmd_testset,
            "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="normnls", description="Normalized solutions of a coupled cubic system.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="run configuration file")
    p.add_argument("--output", type=Path, help="output directory (default ./normnls-out/<command>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--beta", type=float, help="override the coupling")
    p.add_argument("--k", type=int, help="override the number of solutions / test-set dimension")
    p.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        cfg = nio.load_config(args.config) if args.config else nio.RunConfig()
    except nio.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        solver = cfg.solver
        if args.seed is not None:
            solver = replace(solver, seed=args.seed)
        if args.threads is not None:
            solver = replace(solver, threads=args.threads)
        over = {"solver": solver}
        if args.beta is not None:
            over["beta"] = args.beta
        if args.k is not None:
            over["k"] = args.k
        cfg = replace(cfg, **over)
    except ValueError as exc:
        print(f"invalid override: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.output or Path("normnls-out") / args.command
    out.mkdir(parents=True, exist_ok=True)
    nio.atomic_write_text(out / "config.txt", nio.serialize_config(cfg))
    try:
        return COMMANDS[args.command](cfg, out, args)
    except Exception as exc:  # noqa: BLE001 - a CLI reports rather than tracebacks
        log.exception("command %s failed", args.command)
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
