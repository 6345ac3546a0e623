"""Run configuration, solution archives, reports and plot-data files.

Config files are line oriented::

    schema_version = 1
    [problem]
    a = 4.0
    beta = -2.0
    [sweep]
    betas = [-2.0, -5.0, -20.0, -100.0]

Values are numbers, booleans (true/false), quoted strings or bracketed
lists of numbers.  Comments start with '#'.  Every file is written to a
temporary sibling and renamed into place.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .functionals import ProblemParams, StatePair, diagnostics, rayleigh_multipliers
from .grid import RadialGrid
from .sphere_opt import SolveConfig

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION", "ConfigError", "RunConfig", "parse_config", "serialize_config", "load_config",
    "atomic_write_text", "atomic_write_bytes", "save_archive", "load_archive", "ArchiveError",
    "content_hash", "write_report", "report_document", "write_sweep_csv", "write_profile",
    "read_profile", "SWEEP_COLUMNS",
]


# -- atomic writes --------------------------------------------------------------


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


# -- configuration ------------------------------------------------------------


class ConfigError(ValueError):
    """Malformed configuration, located by line and column (1-based)."""

    def __init__(self, message: str, line: int, column: int, source: str = "<config>"):
        super().__init__(f"{source}:{line}:{column}: {message}")
        self.line, self.column, self.source = line, column, source


@dataclass(frozen=True)
class RunConfig:
    a: float = 4.0
    mu: float = 1.0
    beta: float = -2.0
    r_max: float | None = None
    n: int | None = None
    solver: SolveConfig = SolveConfig()
    k: int = 2
    sweep_start: float = -1.0
    sweep_betas: tuple = (-2.0, -5.0, -10.0, -20.0, -50.0, -100.0)
    testset_betas: tuple = (-0.5, -3.0)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not (self.a > 0 and self.mu > 0):
            raise ValueError("mass and self-coupling must be positive")
        if (self.r_max is None) != (self.n is None):
            raise ValueError("grid needs both r_max and n")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    @property
    def params(self) -> ProblemParams:
        return ProblemParams.symmetric(self.a, self.beta, self.mu)

    @property
    def grid(self) -> RadialGrid | None:
        return None if self.r_max is None else RadialGrid(self.r_max, self.n)


# section -> {key: (attribute, type)}
_SCHEMA = {
    "": {"schema_version": ("schema_version", int)},
    "problem": {"a": ("a", float), "mu": ("mu", float), "beta": ("beta", float)},
    "grid": {"r_max": ("r_max", float), "n": ("n", int)},
    "solver": {f.name: (f.name, f.type) for f in fields(SolveConfig)},
    "solve": {"k": ("k", int)},
    "sweep": {"start": ("sweep_start", float), "betas": ("sweep_betas", list)},
    "testset": {"betas": ("testset_betas", list)},
}
_SOLVER_TYPES = {"float": float, "int": int}

_SECTION_RE = re.compile(r"\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]\s*$")
_KEY_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _strip_comment(line: str) -> str:
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def _parse_scalar(text: str, kind, line: int, col: int, src: str):
    text = text.strip()
    if kind is bool:
        if text in ("true", "false"):
            return text == "true"
        raise ConfigError(f"expected true or false, got {text!r}", line, col, src)
    if kind is str:
        if len(text) >= 2 and text[0] == text[-1] == '"':
            return text[1:-1]
        raise ConfigError(f"expected a quoted string, got {text!r}", line, col, src)
    try:
        if kind is int:
            return int(text)
        val = float(text)
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {text!r}", line, col, src) from None
    if not np.isfinite(val):
        raise ConfigError(f"non-finite value {text!r}", line, col, src)
    return val


def _parse_value(text: str, kind, line: int, col: int, src: str):
    if kind is list:
        s = text.strip()
        if not (s.startswith("[") and s.endswith("]")):
            raise ConfigError("expected a bracketed list", line, col, src)
        body = s[1:-1]
        if not body.strip():
            return ()
        out, offset = [], text.index("[") + 1
        for item in body.split(","):
            lead = len(item) - len(item.lstrip())
            out.append(_parse_scalar(item, float, line, col + offset + lead, src))
            offset += len(item) + 1
        return tuple(out)
    return _parse_scalar(text, kind, line, col, src)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse config text; unknown sections, keys and bad values raise ConfigError."""
    values: dict = {}
    solver: dict = {}
    section = ""
    seen: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        col0 = len(line) - len(line.lstrip()) + 1
        body = line.strip()
        if body.startswith("["):
            m = _SECTION_RE.match(body)
            if not m:
                raise ConfigError("malformed section header", lineno, col0, source)
            if m.group(1) not in _SCHEMA or m.group(1) == "":
                raise ConfigError(f"unknown section [{m.group(1)}]", lineno, col0, source)
            section = m.group(1)
            continue
        m = _KEY_RE.match(body)
        if not m:
            raise ConfigError("expected 'key = value'", lineno, col0, source)
        key = m.group(1)
        if key not in _SCHEMA[section]:
            where = f"[{section}]" if section else "top level"
            raise ConfigError(f"unknown key {key!r} in {where}", lineno, col0, source)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} (first on line {seen[section, key]})",
                              lineno, col0, source)
        seen[section, key] = lineno
        attr, kind = _SCHEMA[section][key]
        if isinstance(kind, str):
            kind = _SOLVER_TYPES[kind]
        rest = body[m.end():]
        vcol = col0 + m.end() + len(rest) - len(rest.lstrip())
        val = _parse_value(rest.lstrip(), kind, lineno, vcol, source)
        if section == "solver":
            solver[attr] = val
        else:
            values[attr] = val
    if values.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        line = seen.get(("", "schema_version"), 1)
        raise ConfigError(f"unsupported schema_version {values['schema_version']}", line, 1, source)
    try:
        return RunConfig(solver=SolveConfig(**solver), **values)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), 1, 1, source) from None


def _fmt(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, str):
        return f'"{val}"'
    if isinstance(val, tuple):
        return "[" + ", ".join(repr(float(x)) for x in val) + "]"
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    return repr(int(val))


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    lines = [f"schema_version = {cfg.schema_version}"]
    for section, keys in _SCHEMA.items():
        if not section:
            continue
        src = cfg.solver if section == "solver" else cfg
        items = [(k, getattr(src, attr)) for k, (attr, _) in keys.items()]
        items = [(k, v) for k, v in items if v is not None]
        if not items:
            continue
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in items)
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


# -- solution archive ---------------------------------------------------------


class ArchiveError(ValueError):
    """Corrupt archive or content-hash mismatch."""


def content_hash(u: np.ndarray, v: np.ndarray, lambdas) -> str:
    """Git-style blob hash of the payload (sha1 over 'blob <size>\\0' + bytes)."""
    payload = b"".join(np.ascontiguousarray(x, dtype="<f8").tobytes()
                       for x in (u, v, np.asarray(lambdas, dtype=float)))
    return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()


def save_archive(path, state: StatePair, lambdas=None) -> Path:
    """Store node values, multipliers and diagnostics with a hashed header."""
    lams = tuple(float(x) for x in (lambdas if lambdas is not None else rayleigh_multipliers(state)))
    g = state.grid
    header = {
        "schema_version": SCHEMA_VERSION,
        "grid": {"r_max": g.r_max, "n": g.n},
        "params": state.params.as_dict(),
        "hash": content_hash(state.u.values, state.v.values, lams),
        "diagnostics": diagnostics(state).as_dict(),
    }
    buf = io.BytesIO()
    np.savez(buf, header=np.array(json.dumps(header, sort_keys=True)), u=state.u.values,
             v=state.v.values, lambdas=np.array(lams))
    return atomic_write_bytes(path, buf.getvalue())


def load_archive(path) -> tuple[StatePair, tuple[float, float], dict]:
    """Returns (state, multipliers, header); raises ArchiveError on a hash mismatch."""
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        u, v, lams = z["u"], z["v"], tuple(float(x) for x in z["lambdas"])
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ArchiveError(f"unsupported archive schema {header.get('schema_version')}")
    if content_hash(u, v, lams) != header["hash"]:
        raise ArchiveError("payload does not match the header hash")
    grid = RadialGrid(header["grid"]["r_max"], header["grid"]["n"])
    state = StatePair.from_arrays(grid, u, v, ProblemParams(**header["params"]))
    return state, lams, header


# -- reports ------------------------------------------------------------------


RESULT_KEYS = ("branch_id", "beta", "energy", "lambda1", "lambda2", "pohozaev_residual", "grad_norm",
               "segregation", "morse_index_S", "morse_index_P", "status")
SWEEP_COLUMNS = ("branch_id", "beta", "energy", "lambda1", "lambda2", "segregation",
                 "limit_residual", "overlap")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def report_document(command: str, params: dict, grid: dict | None, results: list,
                    timing: dict | None = None, status: str = "complete", extra: dict | None = None) -> dict:
    rows = []
    for r in results:
        missing = [k for k in RESULT_KEYS if k not in r]
        if missing:
            raise KeyError(f"result is missing {missing}")
        rows.append({k: r[k] for k in RESULT_KEYS} | {k: v for k, v in r.items() if k not in RESULT_KEYS})
    doc = {"schema_version": SCHEMA_VERSION, "params": params, "grid": grid, "command": command,
           "status": status, "results": rows, "timing": timing or {}}
    if extra:
        doc.update(extra)
    return doc


def write_report(path, doc: dict) -> Path:
    return atomic_write_text(path, json.dumps(doc, indent=2, default=_jsonable, allow_nan=True) + "\n")


def write_sweep_csv(path, rows) -> Path:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                    for k, v in row.items()})
    return atomic_write_text(path, buf.getvalue())


def write_profile(path, state: StatePair) -> Path:
    """Header lines '# key = value' (r_max, n, a, mu, beta), then rows 'r u v'."""
    g, p = state.grid, state.params
    head = [f"# r_max = {float(g.r_max)!r}", f"# n = {int(g.n)}", f"# a = {float(p.a1)!r}",
            f"# mu = {float(p.mu1)!r}", f"# beta = {float(p.beta)!r}"]
    if not p.is_symmetric:
        head += [f"# a2 = {float(p.a2)!r}", f"# mu2 = {float(p.mu2)!r}"]
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack([g.nodes, state.u.values, state.v.values]), fmt="%.17g")
    return atomic_write_text(path, "\n".join(head) + "\n" + buf.getvalue())


def read_profile(path) -> tuple[dict, np.ndarray]:
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            meta[key.strip()] = int(val) if key.strip() == "n" else float(val)
        elif line.strip():
            rows.append([float(x) for x in line.split()])
    return meta, np.array(rows)
