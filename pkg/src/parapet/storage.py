"""On-disk formats: PVSF coefficient snapshots and norm-trace CSVs.

PVSF layout: a 32-byte little-endian header

    magic   4 bytes  b"PVSF"
    version u32      currently 1
    d       u32      spatial dimension
    n       u32      modes per axis
    N       u32      component count
    reserved u32     zero
    s       f64      Sobolev index of the record

followed, per component, by (Re, Im) float64 pairs of the coefficients
in lexicographic lattice order (k sorted ascending axis by axis).
"""

from __future__ import annotations

import csv
import struct
from functools import lru_cache

import numpy as np

from .errors import UsageError
from .fields import SpectralField, TorusGrid

MAGIC = b"PVSF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIId")

assert _HEADER.size == 32


@lru_cache(maxsize=None)
def _lex_index(d, n):
    """Indices into FFT layout that enumerate the lattice lexicographically."""
    freqs = np.fft.fftfreq(n, 1.0 / n)
    order = np.argsort(freqs, kind="stable")
    if d == 1:
        return np.ix_(order)
    return np.ix_(order, order)


def write_snapshot(path, f, s):
    """Write one field to a PVSF file."""
    grid = f.grid
    header = _HEADER.pack(MAGIC, VERSION, grid.d, grid.n, f.ncomp, 0, float(s))
    idx = _lex_index(grid.d, grid.n)
    with open(path, "wb") as fh:
        fh.write(header)
        for i in range(f.ncomp):
            block = f.coeffs[i][idx]
            flat = np.empty(block.size * 2, dtype="<f8")
            flat[0::2] = block.real.reshape(-1)
            flat[1::2] = block.imag.reshape(-1)
            fh.write(flat.tobytes())


def read_snapshot(path):
    """Read a PVSF file, returning (SpectralField, s)."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise UsageError(f"{path}: truncated header")
        magic, version, d, n, ncomp, _reserved, s = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise UsageError(f"{path}: not a PVSF file (magic {magic!r})")
        if version != VERSION:
            raise UsageError(f"{path}: unsupported version {version}")
        grid = TorusGrid(int(d), int(n))
        count = grid.size * 2
        coeffs = np.empty((ncomp,) + grid.shape, dtype=np.complex128)
        idx = _lex_index(grid.d, grid.n)
        for i in range(ncomp):
            flat = np.frombuffer(fh.read(count * 8), dtype="<f8")
            if flat.size != count:
                raise UsageError(f"{path}: truncated payload")
            block = (flat[0::2] + 1j * flat[1::2]).reshape(grid.shape)
            out = np.empty(grid.shape, dtype=np.complex128)
            out[idx] = block
            coeffs[i] = out
        return SpectralField(grid, coeffs), float(s)


def norm_trace_rows(history):
    """Rows (time, Hs, Xs, Ys, Es, mean_1..mean_N) with running X/Y/E."""
    rows = []
    run_x = 0.0
    run_ysq = 0.0
    t = history.times
    for i in range(len(history)):
        run_x = max(run_x, history.hs[i])
        if i > 0:
            run_ysq += 0.5 * (history.grad_sq[i] + history.grad_sq[i - 1]) * (t[i] - t[i - 1])
        row = [
            float(t[i]),
            float(history.hs[i]),
            run_x,
            float(np.sqrt(run_ysq)),
            float(np.sqrt(run_x**2 + run_ysq)),
        ]
        row.extend(float(v) for v in history.means[i].real)
        rows.append(row)
    return rows


def write_trace_csv(path, rows):
    """CSV from precomputed rows; component count is inferred from width."""
    ncomp = (len(rows[0]) - 5) if rows else 0
    header = ["time", "Hs", "Xs", "Ys", "Es"] + [f"mean_{i + 1}" for i in range(ncomp)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_norm_trace(path, history):
    write_trace_csv(path, norm_trace_rows(history))


def write_report(path, entries):
    """Flat key = value report, one entry per line, insertion order kept."""
    with open(path, "w") as fh:
        for key, val in entries.items():
            if isinstance(val, float):
                fh.write(f"{key} = {val:.17g}\n")
            else:
                fh.write(f"{key} = {val}\n")


def read_report(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out
