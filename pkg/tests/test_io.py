import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normnls import io as nio
from normnls.io import (ArchiveError, ConfigError, RunConfig, SWEEP_COLUMNS, atomic_write_text,
                        content_hash, load_archive, parse_config, read_profile, report_document,
                        save_archive, serialize_config, write_profile, write_report,
                        write_sweep_csv)
from normnls.sphere_opt import SolveConfig

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.1, 50), mu=st.floats(0.1, 10), beta=finite, k=st.integers(1, 6),
       seed=st.integers(0, 2**31), tol=st.floats(1e-14, 1e-2),
       betas=st.lists(finite, max_size=6), grid=st.booleans())
def test_config_round_trip(a, mu, beta, k, seed, tol, betas, grid):
    cfg = RunConfig(a=a, mu=mu, beta=beta, k=k, solver=SolveConfig(seed=seed, tol_grad=tol),
                    sweep_betas=tuple(betas), r_max=30.0 if grid else None, n=500 if grid else None)
    assert parse_config(serialize_config(cfg)) == cfg


def test_config_defaults_and_comments():
    cfg = parse_config("# comment\n[problem]\nbeta = -3   # trailing\n\n[solve]\nk = 4\n")
    assert cfg.beta == -3.0 and cfg.k == 4 and cfg.a == 4.0


@pytest.mark.parametrize("text, line, col", [
    ("[problem]\nbeta = -1\n[solver]\nmax_iterz = 3\n", 4, 1),
    ("[problem]\n  a = abc\n", 2, 7),
    ("[nosuch]\n", 1, 1),
    ("[problem]\nbeta -1\n", 2, 1),
    ("[problem]\nbeta = 1\nbeta = 2\n", 3, 1),
    ("[sweep]\nbetas = [-1, x]\n", 2, 14),
    ("[sweep]\nbetas = -1\n", 2, 9),
    ("[problem]\na = nan\n", 2, 5),
    ("schema_version = 9\n", 1, 1),
])
def test_config_errors_locate_line_and_column(text, line, col):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "cfg.txt")
    assert (info.value.line, info.value.column) == (line, col)
    assert str(info.value).startswith(f"cfg.txt:{line}:{col}: ")


def test_config_semantic_error():
    with pytest.raises(ConfigError):
        parse_config("[grid]\nr_max = 20\n")
    with pytest.raises(ConfigError):
        parse_config("[solver]\narmijo = 0.9\n")


def test_archive_round_trip(tmp_path, pair):
    lams = (-1.25, -0.75)
    path = save_archive(tmp_path / "a.npz", pair, lams)
    state, got, header = load_archive(path)
    assert got == lams
    assert np.max(np.abs(state.u.values - pair.u.values)) <= 1e-12
    assert np.max(np.abs(state.v.values - pair.v.values)) <= 1e-12
    assert state.params == pair.params
    assert header["hash"] == content_hash(pair.u.values, pair.v.values, lams)
    assert set(header) >= {"schema_version", "grid", "params", "hash", "diagnostics"}


def test_archive_hash_mismatch(tmp_path, pair):
    path = save_archive(tmp_path / "a.npz", pair, (-1.0, -1.0))
    with np.load(path) as z:
        data = dict(z)
    data["u"] = data["u"].copy()
    data["u"][3] += 1e-9
    np.savez(tmp_path / "b.npz", **data)
    with pytest.raises(ArchiveError):
        load_archive(tmp_path / "b.npz")


def test_content_hash_is_git_blob_style():
    import hashlib

    u, v = np.array([1.0]), np.array([2.0])
    payload = np.array([1.0, 2.0, 3.0, 4.0], dtype="<f8").tobytes()
    want = hashlib.sha1(b"blob 32\0" + payload).hexdigest()
    assert content_hash(u, v, (3.0, 4.0)) == want


def test_profile_round_trip(tmp_path, pair):
    path = write_profile(tmp_path / "p.txt", pair)
    lines = path.read_text().splitlines()
    assert lines[:5] == ["# r_max = 20.0", "# n = 1000", "# a = 4.0", "# mu = 1.0", "# beta = -0.5"]
    meta, rows = read_profile(path)
    assert meta["n"] == 1000 and rows.shape == (1000, 3)
    assert np.array_equal(rows[:, 1], pair.u.values)
    assert np.array_equal(rows[:, 0], pair.grid.nodes)


def test_sweep_csv_columns(tmp_path):
    row = {k: 0.5 for k in SWEEP_COLUMNS} | {"branch_id": "b0", "extra": 1}
    path = write_sweep_csv(tmp_path / "s.csv", [row])
    head, first = path.read_text().splitlines()
    assert head == ",".join(SWEEP_COLUMNS)
    assert first.startswith("b0,0.5,")


def test_report_keys_stable(tmp_path):
    row = {k: None for k in nio.RESULT_KEYS} | {"extra": 1.5}
    doc = report_document("solve", {"a": 4.0}, {"r_max": 1.0, "n": 2}, [row], {"wall_time": 0.1})
    assert list(doc) == ["schema_version", "params", "grid", "command", "status", "results", "timing"]
    assert list(doc["results"][0])[:len(nio.RESULT_KEYS)] == list(nio.RESULT_KEYS)
    write_report(tmp_path / "r.json", doc | {"x": np.float64(2.0)})
    assert json.loads((tmp_path / "r.json").read_text())["x"] == 2.0
    with pytest.raises(KeyError):
        report_document("solve", {}, None, [{"beta": 1.0}])


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "sub" / "f.txt"
    atomic_write_text(target, "one")
    atomic_write_text(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["f.txt"]
