"""Spectral representation of vector fields on the periodic torus.

Fields live on [0, 2*pi)^d with d in {1, 2} and are stored as Fourier
coefficients over the integer lattice in FFT layout, normalized so that
the k = 0 coefficient is the component mean:

    c_k = (1/n^d) * sum_x f(x) exp(-i k.x),   f(x) = sum_k c_k exp(i k.x).

All Sobolev norms use the bracket weight (1 + |k|^2)^s unless the
homogeneous flag is set, in which case the weight is |k|^(2s) and the
mean mode is skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import UsageError

_SPATIAL_DIMS = (1, 2)

_trapz = getattr(np, "trapezoid", None) or np.trapz


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the d-torus with n collocation points per axis."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in _SPATIAL_DIMS:
            raise UsageError(f"spatial dimension must be 1 or 2, got {self.d}")
        if not _is_pow2(self.n) or self.n < 4:
            raise UsageError(f"modes per axis must be a power of two >= 4, got {self.n}")

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def size(self):
        return self.n**self.d

    @property
    def axes(self):
        return tuple(range(-self.d, 0))

    def wavenumbers(self, axis):
        """Integer frequencies along one axis, broadcast to the grid shape."""
        return _axis_wavenumbers(self.d, self.n, axis)

    @property
    def ksq(self):
        """|k|^2 over the lattice, shape == grid shape."""
        return _ksq(self.d, self.n)

    @property
    def kmax(self):
        """Largest lattice radius |k| present on the grid."""
        return float(np.sqrt(self.ksq.max()))

    @property
    def dealias_mask(self):
        """Boolean mask keeping |k_i| <= n//3 on every axis (2/3 rule)."""
        return _dealias_mask(self.d, self.n)

    def coordinates(self, axis):
        """Physical coordinates along one axis, broadcast to the grid shape."""
        return _axis_coordinates(self.d, self.n, axis)


@lru_cache(maxsize=None)
def _freqs(n):
    return np.fft.fftfreq(n, 1.0 / n).astype(np.float64)


def _broadcast_axis(arr, d, axis):
    shape = [1] * d
    shape[axis] = arr.shape[0]
    return arr.reshape(shape)


@lru_cache(maxsize=None)
def _axis_wavenumbers(d, n, axis):
    out = _broadcast_axis(_freqs(n), d, axis) * np.ones((n,) * d)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _ksq(d, n):
    out = np.zeros((n,) * d)
    for ax in range(d):
        out = out + _broadcast_axis(_freqs(n) ** 2, d, ax)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _dealias_mask(d, n):
    cut = n // 3
    mask = np.ones((n,) * d, dtype=bool)
    for ax in range(d):
        mask &= _broadcast_axis(np.abs(_freqs(n)) <= cut, d, ax)
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=None)
def _axis_coordinates(d, n, axis):
    x = 2.0 * np.pi * np.arange(n) / n
    out = _broadcast_axis(x, d, axis) * np.ones((n,) * d)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _bracket_weights(d, n, s):
    out = (1.0 + _ksq(d, n)) ** s
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _homogeneous_weights(d, n, s):
    ksq = _ksq(d, n).copy()
    flat = ksq.reshape(-1)
    flat[0] = 1.0  # placeholder, the k=0 term is zeroed below
    out = ksq**s
    out.reshape(-1)[0] = 0.0
    out.setflags(write=False)
    return out


@dataclass
class SpectralField:
    """N-component field stored as Fourier coefficients (N, *grid.shape)."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.ndim != self.grid.d + 1 or c.shape[1:] != self.grid.shape:
            raise UsageError(
                f"coefficient array shape {c.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "coeffs", c)

    @property
    def ncomp(self):
        return self.coeffs.shape[0]

    def copy(self):
        return SpectralField(self.grid, self.coeffs.copy())

    def __add__(self, other):
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__


def zero_field(grid, ncomp):
    return SpectralField(grid, np.zeros((ncomp,) + grid.shape, dtype=np.complex128))


def from_samples(grid, samples):
    """Forward transform physical samples (N, *grid.shape) to coefficients."""
    samples = np.asarray(samples)
    if samples.ndim == grid.d:
        samples = samples[None]
    coeffs = np.fft.fftn(samples, axes=grid.axes) / grid.size
    return SpectralField(grid, coeffs)


def to_samples(f):
    """Inverse transform to (complex) physical samples."""
    return np.fft.ifftn(f.coeffs, axes=f.grid.axes) * f.grid.size


def to_real_samples(f):
    """Physical samples of a real field (imaginary part discarded)."""
    return to_samples(f).real


def transform_samples(grid, samples):
    """fft of raw physical arrays with leading batch dims, same normalization."""
    return np.fft.fftn(np.asarray(samples), axes=grid.axes) / grid.size


def mean(f):
    """Component means: the k = 0 coefficients."""
    idx = (slice(None),) + (0,) * f.grid.d
    return f.coeffs[idx].copy()


def project_mean_free(f):
    """Zero the k = 0 mode."""
    out = f.coeffs.copy()
    idx = (slice(None),) + (0,) * f.grid.d
    out[idx] = 0.0
    return SpectralField(f.grid, out)


def sobolev_norm(f, s, homogeneous=False):
    """H^s norm with bracket weights, or the |k|^s mean-free variant."""
    if homogeneous:
        w = _homogeneous_weights(f.grid.d, f.grid.n, float(s))
    else:
        w = _bracket_weights(f.grid.d, f.grid.n, float(s))
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2).real))


def l2_norm(f):
    return sobolev_norm(f, 0.0)


def grad_sobolev_sq(f, s):
    """||grad f||_{H^s}^2 = sum |k|^2 (1+|k|^2)^s |c_k|^2."""
    w = _ksq(f.grid.d, f.grid.n) * _bracket_weights(f.grid.d, f.grid.n, float(s))
    return float(np.sum(w * np.abs(f.coeffs) ** 2).real)


def dealias(f):
    """Apply the 2/3-rule mask to a field."""
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)


def dealias_samples(grid, samples):
    """Band-limit raw physical arrays (any leading dims) to the 2/3 ball."""
    c = np.fft.fftn(np.asarray(samples, dtype=np.complex128), axes=grid.axes)
    c *= grid.dealias_mask
    out = np.fft.ifftn(c, axes=grid.axes)
    if np.isrealobj(samples):
        return out.real
    return out


def derivative_coeffs(f, axis):
    """Spectral derivative along one axis (coefficients only)."""
    ik = 1j * f.grid.wavenumbers(axis)
    return f.coeffs * ik


def matvec_samples(m_samples, vec_samples):
    """Pointwise matrix-vector product in physical space.

    m_samples: (N, N, *shape) or (*shape,) scalar field;
    vec_samples: (N, *shape).
    """
    m = np.asarray(m_samples)
    v = np.asarray(vec_samples)
    if m.ndim == v.ndim - 1:
        return m[None] * v
    return np.einsum("ij...,j...->i...", m, v)


def apply_divergence_form(m_samples, f):
    """sum_k d_k [ M (d_k f) ] with 2/3-rule dealiasing on the products.

    M is given as physical samples, (N, N, *shape) or scalar (*shape,);
    it is expected band-limited to the 2/3 ball (use dealias_samples).
    The k = 0 mode of the result is exactly zero.
    """
    grid = f.grid
    mask = grid.dealias_mask
    out = np.zeros_like(f.coeffs)
    for ax in range(grid.d):
        ik = 1j * grid.wavenumbers(ax)
        dcoef = f.coeffs * ik * mask
        w = np.fft.ifftn(dcoef, axes=grid.axes) * grid.size
        mw = matvec_samples(m_samples, w)
        g = np.fft.fftn(mw, axes=grid.axes) / grid.size
        out += ik * (g * mask)
    return SpectralField(grid, out)


@dataclass
class SolutionHistory:
    """Time-stamped trajectory with norm traces recorded as it was built.

    states has shape (T, N, *grid.shape); traces are recomputable from
    states and are kept only so reports need no second pass.
    """

    grid: TorusGrid
    s: float
    times: np.ndarray
    states: np.ndarray
    hs: np.ndarray
    grad_sq: np.ndarray
    means: np.ndarray
    forcing_mean_integral: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def ncomp(self):
        return self.states.shape[1]

    def __len__(self):
        return len(self.times)

    def state(self, i):
        return SpectralField(self.grid, self.states[i])

    def initial_field(self):
        return self.state(0)

    def final_field(self):
        return self.state(-1)

    def state_at(self, t):
        """Linear interpolation of coefficients in time."""
        times = self.times
        if t <= times[0]:
            return self.state(0)
        if t >= times[-1]:
            return self.state(-1)
        i = int(np.searchsorted(times, t)) - 1
        w = (t - times[i]) / (times[i + 1] - times[i])
        c = (1.0 - w) * self.states[i] + w * self.states[i + 1]
        return SpectralField(self.grid, c)


def build_history(grid, s, times, state_list, forcing_mean_integral=None, meta=None):
    times = np.asarray(times, dtype=np.float64)
    states = np.stack([np.asarray(c, dtype=np.complex128) for c in state_list])
    nT = states.shape[0]
    ncomp = states.shape[1]
    hs = np.empty(nT)
    gsq = np.empty(nT)
    means = np.empty((nT, ncomp), dtype=np.complex128)
    for i in range(nT):
        f = SpectralField(grid, states[i])
        hs[i] = sobolev_norm(f, s)
        gsq[i] = grad_sobolev_sq(f, s)
        means[i] = mean(f)
    if forcing_mean_integral is None:
        forcing_mean_integral = np.zeros((nT, ncomp), dtype=np.complex128)
    return SolutionHistory(
        grid=grid,
        s=s,
        times=times,
        states=states,
        hs=hs,
        grad_sq=gsq,
        means=means,
        forcing_mean_integral=np.asarray(forcing_mean_integral),
        meta=dict(meta or {}),
    )


def energy_norms(h, s=None):
    """(X, Y, E): sup-in-time H^s, L^2-in-time gradient H^s, combined.

    Y is the trapezoidal quadrature of ||grad U(t)||_{H^s}^2, square-rooted.
    """
    if s is None or float(s) == float(h.s):
        hs = h.hs
        gsq = h.grad_sq
    else:
        hs = np.array([sobolev_norm(h.state(i), s) for i in range(len(h))])
        gsq = np.array([grad_sobolev_sq(h.state(i), s) for i in range(len(h))])
    x = float(hs.max())
    ysq = float(_trapz(gsq, h.times))
    y = float(np.sqrt(max(ysq, 0.0)))
    e = float(np.sqrt(x * x + ysq))
    return x, y, e


def difference_energy_norms(h1, h2, s):
    """Energy norms of the difference of two histories on one time grid."""
    if h1.grid != h2.grid:
        raise UsageError("histories must share a grid for difference norms")
    if len(h1) != len(h2) or not np.allclose(h1.times, h2.times):
        raise UsageError("histories must share a time grid for difference norms")
    hs = np.empty(len(h1))
    gsq = np.empty(len(h1))
    for i in range(len(h1)):
        f = SpectralField(h1.grid, h1.states[i] - h2.states[i])
        hs[i] = sobolev_norm(f, s)
        gsq[i] = grad_sobolev_sq(f, s)
    x = float(hs.max())
    ysq = float(_trapz(gsq, h1.times))
    return x, float(np.sqrt(max(ysq, 0.0))), float(np.sqrt(x * x + ysq))
