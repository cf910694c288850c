"""Dyadic (Littlewood-Paley) frequency decomposition on the lattice.

The annulus profile is built from the C-infinity transition
step(t) = g(t) / (g(t) + g(1-t)), g(t) = exp(-1/t) for t > 0, ramping
up on [3/4, 1] and down on [2, 8/3], then normalized by the two-sided
dyadic sum so that

    chi(|k|) + sum_{j >= 0} phi(2^-j |k|) = 1   exactly on the lattice,

with supp phi inside the annulus [3/4, 8/3] and supp chi inside the
ball of radius 4/3.  Blocks with |j - j'| >= 2 have disjoint supports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fields import (
    SpectralField,
    dealias_samples,
    from_samples,
    l2_norm,
    matvec_samples,
    sobolev_norm,
    to_samples,
    zero_field,
)


def smooth_step(t):
    """C-infinity ramp: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=np.float64)
    lo = t <= 0.0
    hi = t >= 1.0
    mid = ~(lo | hi)
    out = np.where(hi, 1.0, 0.0)
    tm = np.where(mid, t, 0.5)
    g1 = np.exp(-1.0 / tm)
    g2 = np.exp(-1.0 / (1.0 - tm))
    out = np.where(mid, g1 / (g1 + g2), out)
    return out if out.shape else float(out)


def _raw_profile(r):
    """Unnormalized annulus profile, supported in [3/4, 8/3]."""
    r = np.asarray(r, dtype=np.float64)
    up = smooth_step((r - 0.75) * 4.0)
    down = 1.0 - smooth_step((r - 2.0) * 1.5)
    return up * down


def _dyadic_sum(r):
    """sum over all integers j of raw(2^-j r), positive for r > 0."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    pos = r > 0
    if not np.any(pos):
        return out
    rp = r[pos]
    jlo = int(np.floor(np.log2(rp.min() / (8.0 / 3.0)))) - 1
    jhi = int(np.ceil(np.log2(rp.max() / 0.75))) + 1
    acc = np.zeros_like(rp)
    for j in range(jlo, jhi + 1):
        acc += _raw_profile(rp * 2.0 ** (-j))
    out[pos] = acc
    return out


def annulus_profile(r):
    """Normalized phi: partition member evaluated at radius r."""
    r = np.asarray(r, dtype=np.float64)
    raw = _raw_profile(r)
    out = np.zeros_like(raw)
    nz = raw > 0
    if np.any(nz):
        out[nz] = raw[nz] / _dyadic_sum(r[nz])
    return out


def ball_profile(r):
    """Normalized chi = sum_{j <= -1} phi(2^-j r); equals 1 at r = 0."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    zero = r == 0
    out[zero] = 1.0
    pos = ~zero
    if np.any(pos):
        rp = r[pos]
        acc = np.zeros_like(rp)
        j = 1
        while np.any(rp * 2.0**j < 8.0 / 3.0):
            acc += annulus_profile(rp * 2.0**j)
            j += 1
        out[pos] = acc
    return out


@dataclass
class DyadicPartition:
    """Lattice multipliers for one grid, plus measured constants."""

    grid: "TorusGrid"
    j_max: int
    chi: np.ndarray = field(repr=False)
    phis: np.ndarray = field(repr=False)  # (j_max+1, *shape)
    calibration: dict = field(default_factory=dict, repr=False)

    def multiplier(self, j):
        if j == -1:
            return self.chi
        if 0 <= j <= self.j_max:
            return self.phis[j]
        return np.zeros(self.grid.shape)

    def low_multiplier(self, j):
        """Multiplier of S_j = sum_{j' <= j-1} Delta_{j'}."""
        if j <= -1:
            return np.zeros(self.grid.shape)
        out = self.chi.copy()
        for jp in range(0, min(j - 1, self.j_max) + 1):
            out += self.phis[jp]
        return out

    def partition_defect(self):
        total = self.chi + self.phis.sum(axis=0)
        return float(np.abs(total - 1.0).max())


@lru_cache(maxsize=None)
def make_partition(grid):
    r = np.sqrt(grid.ksq)
    j_max = max(int(np.ceil(np.log2(max(grid.kmax, 1.0)))), 0)
    chi = ball_profile(r)
    phis = np.stack([annulus_profile(r * 2.0 ** (-j)) for j in range(j_max + 1)])
    return DyadicPartition(grid=grid, j_max=j_max, chi=chi, phis=phis)


def block(part, f, j):
    """Delta_j f; out-of-range j gives the zero field."""
    if j < -1 or j > part.j_max:
        return zero_field(part.grid, f.ncomp)
    return SpectralField(part.grid, f.coeffs * part.multiplier(j))


def low_pass(part, f, j):
    """S_j f = sum of blocks below j; identity once j > j_max."""
    if j <= -1:
        return zero_field(part.grid, f.ncomp)
    if j >= part.j_max + 2:
        return f.copy()
    return SpectralField(part.grid, f.coeffs * part.low_multiplier(j))


def lp_sobolev_norm(part, f, s):
    """l^2 over j of 2^{js} ||Delta_j f||_{L^2}."""
    total = 0.0
    for j in range(-1, part.j_max + 1):
        nrm = l2_norm(block(part, f, j))
        total += (2.0 ** (j * s) * nrm) ** 2
    return float(np.sqrt(total))


def sup_norm(samples):
    return float(np.abs(samples).max())


def verify_bernstein(part, f, j, alpha, q):
    """Ratio ||d^alpha Delta_j f||_q / (2^{j(|alpha|+d(1/2-1/q))} ||Delta_j f||_2).

    p = 2 is fixed; q is 2 or inf (np.inf).  Returns 0.0 when the block
    carries no mass.
    """
    grid = part.grid
    bf = block(part, f, j)
    base = l2_norm(bf)
    if base < 1e-14:
        return 0.0
    dcoef = bf.coeffs.copy()
    tot = 0
    for ax, a in enumerate(alpha):
        if a:
            dcoef = dcoef * (1j * grid.wavenumbers(ax)) ** a
            tot += a
    df = SpectralField(grid, dcoef)
    if q == 2:
        num = l2_norm(df)
        expo = tot
    elif np.isinf(q):
        num = sup_norm(to_samples(df))
        expo = tot + grid.d * 0.5
    else:
        raise ValueError(f"q must be 2 or inf, got {q}")
    return float(num / (2.0 ** (j * expo) * base))


def _mask_product(grid, a_phys, g_coeffs):
    """Physical product with the 2/3 mask applied to the result."""
    gp = np.fft.ifftn(g_coeffs, axes=grid.axes) * grid.size
    prod = matvec_samples(a_phys, gp)
    out = np.fft.fftn(prod, axes=grid.axes) / grid.size
    return out * grid.dealias_mask


def commutator_decomposition(part, a_samples, f, j):
    """Three-term split of [Delta_j, a] f with dealiased products.

    Returns a dict with the three term fields, the directly computed
    commutator, and the residual ||sum - direct||_2 (all on the 2/3 ball;
    inputs are masked on entry).
    """
    grid = part.grid
    mask = grid.dealias_mask
    a = dealias_samples(grid, np.asarray(a_samples, dtype=np.float64))
    fc = f.coeffs * mask
    ahat = np.fft.fftn(a, axes=grid.axes) / grid.size
    jm = part.j_max
    phij = part.multiplier(j)

    a_blocks = [
        np.fft.ifftn(ahat * part.multiplier(jp), axes=grid.axes) * grid.size
        for jp in range(-1, jm + 1)
    ]
    a_lows = {
        jp: np.fft.ifftn(ahat * part.low_multiplier(jp), axes=grid.axes) * grid.size
        for jp in range(-2, jm + 1)
    }

    t1 = np.zeros_like(fc)
    t2 = np.zeros_like(fc)
    t3 = np.zeros_like(fc)
    for idx, jp in enumerate(range(-1, jm + 1)):
        fb = fc * part.multiplier(jp)
        flow = fc * part.low_multiplier(jp + 2)
        t1 += _mask_product(grid, a_blocks[idx], flow)
        inner = _mask_product(grid, a_lows[jp - 1], fb)
        outer = _mask_product(grid, a_lows[jp - 1], phij * fb)
        t2 -= outer - phij * inner
        t3 += _mask_product(grid, a_lows[jp - 1] - a, phij * fb)
    t1 = phij * t1

    direct = phij * _mask_product(grid, a, fc) - _mask_product(grid, a, phij * fc)
    total = t1 + t2 + t3
    residual = float(np.sqrt(np.sum(np.abs(total - direct) ** 2)))
    return {
        "t1": SpectralField(grid, t1),
        "t2": SpectralField(grid, t2),
        "t3": SpectralField(grid, t3),
        "direct": SpectralField(grid, direct),
        "residual": residual,
        "scale": sup_norm(a) * l2_norm(SpectralField(grid, fc)),
    }


def calibrate_equivalence(part, s, n_fields=40, seed=7):
    """Measured (c1, c2) for lp norm vs bracket H^s on this grid."""
    key = ("equiv", float(s))
    if key in part.calibration:
        return part.calibration[key]
    rng = np.random.default_rng(seed)
    lo, hi = np.inf, 0.0
    for _ in range(n_fields):
        f = from_samples(part.grid, rng.standard_normal((1,) + part.grid.shape))
        ratio = lp_sobolev_norm(part, f, s) / sobolev_norm(f, s)
        lo = min(lo, ratio)
        hi = max(hi, ratio)
    out = (lo * 0.98, hi * 1.02)
    part.calibration[key] = out
    return out


def calibrate_bernstein(part, alpha, q, n_fields=30, seed=11):
    """Measured max Bernstein ratio over random fields and all j."""
    key = ("bernstein", tuple(alpha), float(q))
    if key in part.calibration:
        return part.calibration[key]
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_fields):
        f = from_samples(part.grid, rng.standard_normal((1,) + part.grid.shape))
        for j in range(-1, part.j_max + 1):
            best = max(best, verify_bernstein(part, f, j, alpha, q))
    part.calibration[key] = best
    return best
