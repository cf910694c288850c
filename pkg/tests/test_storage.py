import csv

import numpy as np
import pytest

from parapet.errors import UsageError
from parapet.fields import TorusGrid, build_history, from_samples
from parapet.storage import (
    norm_trace_rows,
    read_report,
    read_snapshot,
    write_norm_trace,
    write_report,
    write_snapshot,
    write_trace_csv,
)


def _field(d, n, ncomp, seed):
    rng = np.random.default_rng(seed)
    grid = TorusGrid(d, n)
    return from_samples(grid, rng.standard_normal((ncomp,) + grid.shape))


@pytest.mark.parametrize("d,n,ncomp", [(1, 32, 1), (1, 64, 2), (2, 16, 3)])
def test_snapshot_roundtrip_exact(tmp_path, d, n, ncomp):
    f = _field(d, n, ncomp, seed=d * 100 + n)
    path = tmp_path / "state.pvsf"
    write_snapshot(path, f, 2.5)
    g, s = read_snapshot(path)
    assert s == 2.5
    assert g.grid.d == d and g.grid.n == n and g.ncomp == ncomp
    np.testing.assert_array_equal(g.coeffs, f.coeffs)


def test_snapshot_header_layout(tmp_path):
    f = _field(1, 32, 2, seed=0)
    path = tmp_path / "state.pvsf"
    write_snapshot(path, f, 2.0)
    raw = path.read_bytes()
    assert raw[:4] == b"PVSF"
    assert len(raw) == 32 + 2 * 32 * 16  # header + ncomp * n * (re, im) f64


def test_snapshot_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.pvsf"
    path.write_bytes(b"NOPE" + b"\x00" * 60)
    with pytest.raises(UsageError):
        read_snapshot(path)


def test_snapshot_rejects_truncation(tmp_path):
    f = _field(1, 32, 1, seed=1)
    path = tmp_path / "state.pvsf"
    write_snapshot(path, f, 2.0)
    raw = path.read_bytes()
    short = tmp_path / "short.pvsf"
    short.write_bytes(raw[:-16])
    with pytest.raises(UsageError):
        read_snapshot(short)
    header_only = tmp_path / "header.pvsf"
    header_only.write_bytes(raw[:10])
    with pytest.raises(UsageError):
        read_snapshot(header_only)


def test_report_roundtrip(tmp_path):
    path = tmp_path / "run.report.txt"
    entries = {
        "mode": "solve-linear",
        "final_hs": 1.1201484532026464,
        "steps": 250,
        "ok": True,
    }
    write_report(path, entries)
    back = read_report(path)
    assert back["mode"] == "solve-linear"
    assert float(back["final_hs"]) == entries["final_hs"]  # %.17g is lossless
    assert int(back["steps"]) == 250
    assert back["ok"] == "True"


def test_report_skips_comments_and_blanks(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("# header\n\nkey = 1\n# trailing\nother = a b\n")
    back = read_report(path)
    assert back == {"key": "1", "other": "a b"}


def _toy_history():
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    times = [0.0, 0.1, 0.2]
    states = [from_samples(grid, np.stack([
        (1.0 + 0.1 * i) * np.cos(x), 0.5 * np.ones_like(x)])).coeffs
        for i in range(3)]
    return build_history(grid, 2.0, times, states)


def test_norm_trace_rows_running_quantities():
    h = _toy_history()
    rows = norm_trace_rows(h)
    assert len(rows) == 3
    xs = [r[2] for r in rows]
    assert xs == sorted(xs)  # running max is monotone
    assert rows[0][3] == 0.0  # Y starts at zero
    ys = [r[3] for r in rows]
    assert ys == sorted(ys)
    for r in rows:
        assert abs(r[4] - np.sqrt(r[2] ** 2 + r[3] ** 2)) < 1e-12
    assert abs(rows[1][5]) < 1e-14  # cos x has zero mean
    assert abs(rows[1][6] - 0.5) < 1e-14


def test_write_norm_trace_csv(tmp_path):
    h = _toy_history()
    path = tmp_path / "trace.csv"
    write_norm_trace(path, h)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["time", "Hs", "Xs", "Ys", "Es", "mean_1", "mean_2"]
    assert len(rows) == 4
    assert float(rows[1][0]) == 0.0
    assert float(rows[3][0]) == 0.2


def test_write_trace_csv_from_rows(tmp_path):
    rows = [[0.0, 1.0, 1.0, 0.0, 1.0, 0.3]]
    path = tmp_path / "t.csv"
    write_trace_csv(path, rows)
    with open(path) as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["time", "Hs", "Xs", "Ys", "Es", "mean_1"]
    assert [float(v) for v in got[1]] == rows[0]
