"""Linear solvers for d_t V - M Lap V = F on the torus, per Fourier mode.

Three coefficient regimes share one exponential-integrator kernel:

  constant        M = B: exact per-mode propagator e^{-B |k|^2 dt} with
                  Duhamel forcing by the exponential trapezoidal rule,
  time-dependent  M = M(t): coefficients frozen per step (midpoint by
                  default) with the oscillation (M(t) - B_i) Lap V folded
                  into the forcing through a predictor-corrector,
  variable        M = M(t, x): exponential IMEX; the spatial mean B_bar
                  is integrated exactly, the remainder divergence form
                  explicitly (pseudospectral, 2/3 dealiased).

The k = 0 mode has no diffusion and is integrated by the trapezoid rule
exactly; its propagator entries are overridden analytically so the mean
ledger never picks up Pade roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from . import fields as fld
from .errors import (
    BlowUpError,
    NumericalError,
    PetrovskiiViolationError,
    StiffnessError,
    UsageError,
)
from .fields import (
    SpectralField,
    _trapz,
    build_history,
    project_mean_free,
    sobolev_norm,
)
from .petrovskii import decay_constant, field_margin_eta, spectral_abscissa


@dataclass
class LinearProblem:
    """Data for one linear solve.

    forcing is None, a constant SpectralField, or a callable t -> SpectralField.
    """

    u0: SpectralField
    t_final: float
    dt: float
    forcing: object = None
    snapshot_stride: int = 1

    def __post_init__(self):
        if self.t_final <= 0 or self.dt <= 0:
            raise UsageError("t_final and dt must be positive")
        if self.snapshot_stride < 1:
            raise UsageError("snapshot_stride must be >= 1")

    @property
    def grid(self):
        return self.u0.grid

    def times(self):
        n = max(int(np.ceil(self.t_final / self.dt - 1e-12)), 1)
        return np.linspace(0.0, self.t_final, n + 1)

    def forcing_coeffs(self, t):
        f = self.forcing
        if f is None:
            return None
        if callable(f):
            f = f(t)
        if isinstance(f, SpectralField):
            return f.coeffs
        return np.asarray(f, dtype=np.complex128)


@lru_cache(maxsize=None)
def _unique_lams(grid):
    lams, inv = np.unique(grid.ksq.reshape(-1), return_inverse=True)
    lams.setflags(write=False)
    inv.setflags(write=False)
    return lams, inv


def _phi_bank(b, dt, lams):
    """Per-|k|^2 propagators: E = e^{-B lam dt}, P1 = dt(phi1-phi2)(Z),
    P2 = dt phi2(Z), Z = -B lam dt, via one stacked block expm."""
    b = np.asarray(b, dtype=np.float64)
    nn = b.shape[0]
    ll = len(lams)
    w = np.zeros((ll, 3 * nn, 3 * nn))
    w[:, :nn, :nn] = -dt * lams[:, None, None] * b[None]
    eye = np.eye(nn)
    w[:, :nn, nn : 2 * nn] = eye
    w[:, nn : 2 * nn, 2 * nn :] = eye
    ew = scipy.linalg.expm(w)
    if not np.all(np.isfinite(ew)):
        raise NumericalError("propagator overflow: ||B lam dt|| too large")
    e = np.ascontiguousarray(ew[:, :nn, :nn])
    phi1 = ew[:, :nn, nn : 2 * nn]
    phi2 = ew[:, :nn, 2 * nn :]
    p1 = dt * (phi1 - phi2)
    p2 = dt * phi2
    # exact trapezoid at lam = 0 (mean mode)
    zero = lams == 0.0
    if np.any(zero):
        e[zero] = eye
        p1[zero] = 0.5 * dt * eye
        p2[zero] = 0.5 * dt * eye
    return e, np.ascontiguousarray(p1), np.ascontiguousarray(p2)


class _BankCache:
    """Propagator bank cache keyed by the frozen matrix bytes and dt."""

    def __init__(self, grid):
        self.lams, self.inv = _unique_lams(grid)
        self._store = {}

    def get(self, b, dt):
        b = np.ascontiguousarray(np.asarray(b, dtype=np.float64))
        key = (b.tobytes(), float(dt))
        if key not in self._store:
            e, p1, p2 = _phi_bank(b, dt, self.lams)
            self._store[key] = (e[self.inv], p1[self.inv], p2[self.inv])
        return self._store[key]


def _apply(op, c_flat):
    """op: (modes, N, N); c_flat: (N, modes)."""
    return np.einsum("mij,jm->im", op, c_flat)


def _nz(arr):
    return arr is not None and np.any(arr != 0.0)


class _Marcher:
    """Shared stepping loop.  Subclasses provide per-step propagators and
    forcing; the base handles storage, the mean ledger, and guards."""

    def __init__(self, prob, s, guard_cap=None):
        self.prob = prob
        self.s = s
        self.grid = prob.grid
        self.ncomp = prob.u0.ncomp
        self.cache = _BankCache(self.grid)
        self.guard_cap = guard_cap
        self.n_modes = self.grid.size

    def bank(self, i, t0, t1):
        raise NotImplementedError

    def left_forcing(self, i, t, c_flat):
        raise NotImplementedError

    def right_forcing(self, i, t, c_pred):
        raise NotImplementedError

    def needs_predictor(self, i):
        return False

    def check_step(self, i, t):
        pass

    def run(self, times):
        prob = self.prob
        stride = prob.snapshot_stride
        c = prob.u0.coeffs.reshape(self.ncomp, -1).copy()
        zero_idx = 0  # k = 0 is the first entry in FFT layout
        states = [c.copy()]
        stored_t = [times[0]]
        mean_int = np.zeros(self.ncomp, dtype=np.complex128)
        mean_trace = [mean_int.copy()]
        hs0 = sobolev_norm(SpectralField(self.grid, c.reshape((self.ncomp,) + self.grid.shape)), self.s)
        cap = self.guard_cap
        for i in range(len(times) - 1):
            t0, t1 = times[i], times[i + 1]
            dt = t1 - t0
            self.check_step(i, t0)
            e, p1, p2 = self.bank(i, t0, t1)
            gl = self.left_forcing(i, t0, c)
            if self.needs_predictor(i):
                if gl is None:
                    cpred = _apply(e, c)
                else:
                    cpred = _apply(e, c) + _apply(p1, gl) + _apply(p2, gl)
                gr = self.right_forcing(i, t1, cpred)
            else:
                gr = self.right_forcing(i, t1, None)
            c = _apply(e, c)
            if gl is not None:
                c += _apply(p1, gl)
            if gr is not None:
                c += _apply(p2, gr)
            if not np.all(np.isfinite(c)):
                raise _Unstable(i, t1)
            gl0 = gl[:, zero_idx] if gl is not None else 0.0
            gr0 = gr[:, zero_idx] if gr is not None else 0.0
            mean_int = mean_int + 0.5 * dt * gl0 + 0.5 * dt * gr0
            if cap is not None:
                nrm = sobolev_norm(
                    SpectralField(self.grid, c.reshape((self.ncomp,) + self.grid.shape)), self.s
                )
                if nrm > cap * max(hs0, 1e-30) + cap:
                    raise _Unstable(i, t1, nrm)
            if (i + 1) % stride == 0 or i + 1 == len(times) - 1:
                states.append(c.copy())
                stored_t.append(t1)
                mean_trace.append(mean_int.copy())
        shape = (self.ncomp,) + self.grid.shape
        return build_history(
            self.grid,
            self.s,
            stored_t,
            [st.reshape(shape) for st in states],
            forcing_mean_integral=np.stack(mean_trace),
            meta=self.meta(),
        )

    def meta(self):
        return {}


class _Unstable(Exception):
    def __init__(self, i, t, norm=None):
        self.i = i
        self.t = t
        self.norm = norm


def _require_member(b, context):
    gamma = spectral_abscissa(b)
    if gamma <= 0:
        raise PetrovskiiViolationError(
            f"{context}: coefficient matrix has spectral abscissa {gamma:.3g} <= 0",
            matrix=np.asarray(b),
        )
    return gamma


class _ConstantMarcher(_Marcher):
    def __init__(self, b, prob, s, guard_cap=None):
        super().__init__(prob, s, guard_cap)
        self.b = np.asarray(b, dtype=np.float64)
        self._fc = {}

    def _forcing_at(self, t):
        if t not in self._fc:
            fc = self.prob.forcing_coeffs(t)
            self._fc[t] = None if fc is None else fc.reshape(self.ncomp, -1)
        return self._fc[t]

    def bank(self, i, t0, t1):
        return self.cache.get(self.b, t1 - t0)

    def left_forcing(self, i, t, c_flat):
        return self._forcing_at(t)

    def right_forcing(self, i, t, c_pred):
        return self._forcing_at(t)


def solve_constant(b, prob, s, check=True):
    """Exact per-mode propagation for constant B in the admissible class."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (prob.u0.ncomp, prob.u0.ncomp):
        raise UsageError(f"B shape {b.shape} does not match {prob.u0.ncomp} components")
    if check:
        _require_member(b, "solve_constant")
    m = _ConstantMarcher(b, prob, s)
    try:
        h = m.run(prob.times())
    except _Unstable as exc:
        raise NumericalError(f"constant-coefficient step failed at t={exc.t:g}") from None
    h.meta.update({"solver": "constant", "dt": float(prob.times()[1] - prob.times()[0])})
    return h


class _TimeDependentMarcher(_Marcher):
    def __init__(self, m_fn, prob, s, freeze="midpoint", guard_cap=None):
        super().__init__(prob, s, guard_cap)
        if freeze not in ("midpoint", "left"):
            raise UsageError(f"freeze must be 'midpoint' or 'left', got {freeze!r}")
        self.m_fn = m_fn
        self.freeze = freeze
        self.lam_flat = self.grid.ksq.reshape(-1)
        self._b_i = None
        self._dm_l = None
        self._dm_r = None
        self._m_cache = {}

    def _m_at(self, t):
        if t not in self._m_cache:
            self._m_cache[t] = np.asarray(self.m_fn(t), dtype=np.float64)
        return self._m_cache[t]

    def bank(self, i, t0, t1):
        t_frz = 0.5 * (t0 + t1) if self.freeze == "midpoint" else t0
        b_i = self._m_at(t_frz)
        _require_member(b_i, f"solve_time_dependent at t={t_frz:g}")
        self._b_i = b_i
        self._dm_l = b_i - self._m_at(t0)
        self._dm_r = b_i - self._m_at(t1)
        return self.cache.get(b_i, t1 - t0)

    def _osc(self, dm, c_flat):
        return self.lam_flat * np.einsum("ij,jm->im", dm, c_flat)

    def left_forcing(self, i, t, c_flat):
        fc = self.prob.forcing_coeffs(t)
        g = None if fc is None else fc.reshape(self.ncomp, -1)
        if _nz(self._dm_l):
            osc = self._osc(self._dm_l, c_flat)
            g = osc if g is None else g + osc
        return g

    def needs_predictor(self, i):
        return _nz(self._dm_r)

    def right_forcing(self, i, t, c_pred):
        fc = self.prob.forcing_coeffs(t)
        g = None if fc is None else fc.reshape(self.ncomp, -1)
        if _nz(self._dm_r):
            osc = self._osc(self._dm_r, c_pred)
            g = osc if g is None else g + osc
        return g


def solve_time_dependent(m_fn, prob, s, freeze="midpoint"):
    """Frozen-coefficient stepping for homogeneous-in-space M(t)."""
    m = _TimeDependentMarcher(m_fn, prob, s, freeze)
    try:
        h = m.run(prob.times())
    except _Unstable as exc:
        raise NumericalError(f"time-dependent step failed at t={exc.t:g}") from None
    h.meta.update({"solver": "time-dependent", "freeze": freeze})
    return h


class _VariableMarcher(_Marcher):
    def __init__(self, m_fn, prob, s, guard_cap=1e6, check_field=True):
        super().__init__(prob, s, guard_cap)
        self.m_fn = m_fn
        self.check_field = check_field
        self._m_cache = {}
        self._b_bar = None
        self._dm_l = None
        self._dm_r = None
        self.min_eta = np.inf

    def _m_at(self, t):
        if t not in self._m_cache:
            if len(self._m_cache) > 4:
                self._m_cache.clear()
            self._m_cache[t] = np.asarray(self.m_fn(t), dtype=np.float64)
        return self._m_cache[t]

    @staticmethod
    def _mean(m_samples):
        d = m_samples.ndim - 2
        return m_samples.mean(axis=tuple(range(2, 2 + d)))

    def check_step(self, i, t):
        if not self.check_field:
            return
        m = self._m_at(t)
        eta = field_margin_eta(np.moveaxis(m.reshape(m.shape[:2] + (-1,)), -1, 0))
        self.min_eta = min(self.min_eta, eta)
        if eta <= 0:
            flat = np.moveaxis(m.reshape(m.shape[:2] + (-1,)), -1, 0)
            gammas = np.linalg.eigvals(flat).real.min(axis=-1)
            bad = int(np.argmin(gammas))
            raise PetrovskiiViolationError(
                f"coefficient field left the admissible class at t={t:g} (eta={eta:.3g})",
                matrix=flat[bad],
                witness={"t": float(t), "flat_index": bad},
            )

    def bank(self, i, t0, t1):
        m_mid = self._m_at(0.5 * (t0 + t1))
        b_bar = self._mean(m_mid)
        _require_member(b_bar, f"solve_variable mean matrix at t={0.5 * (t0 + t1):g}")
        self._b_bar = b_bar
        m_l = self._m_at(t0)
        m_r = self._m_at(t1)
        self._dm_l = m_l - b_bar[(...,) + (None,) * self.grid.d]
        self._dm_r = m_r - b_bar[(...,) + (None,) * self.grid.d]
        return self.cache.get(b_bar, t1 - t0)

    def _remainder(self, dm, c_flat):
        f = SpectralField(self.grid, c_flat.reshape((self.ncomp,) + self.grid.shape))
        out = fld.apply_divergence_form(dm, f)
        return out.coeffs.reshape(self.ncomp, -1)

    def left_forcing(self, i, t, c_flat):
        fc = self.prob.forcing_coeffs(t)
        g = None if fc is None else fc.reshape(self.ncomp, -1)
        if _nz(self._dm_l):
            rem = self._remainder(self._dm_l, c_flat)
            g = rem if g is None else g + rem
        return g

    def needs_predictor(self, i):
        return _nz(self._dm_r)

    def right_forcing(self, i, t, c_pred):
        fc = self.prob.forcing_coeffs(t)
        g = None if fc is None else fc.reshape(self.ncomp, -1)
        if _nz(self._dm_r):
            rem = self._remainder(self._dm_r, c_pred)
            g = rem if g is None else g + rem
        return g

    def meta(self):
        return {"min_eta": float(self.min_eta) if np.isfinite(self.min_eta) else None}


def stable_dt(m_samples, c_stab=0.5):
    """Step bound c_stab * delta_bar / ||M - B_bar||_inf^2 for the explicit
    remainder; infinite when M is spatially constant."""
    m = np.asarray(m_samples, dtype=np.float64)
    b_bar = _VariableMarcher._mean(m)
    osc = float(np.abs(m - b_bar[(...,) + (None,) * (m.ndim - 2)]).max())
    delta_bar = spectral_abscissa(b_bar)
    if delta_bar <= 0:
        raise PetrovskiiViolationError(
            "mean coefficient matrix is not admissible", matrix=b_bar
        )
    if osc == 0.0:
        return np.inf
    return c_stab * delta_bar / osc**2


def solve_variable(
    m_fn,
    prob,
    s,
    c_stab=0.5,
    dt_min=1e-8,
    adapt=True,
    check_field=True,
    guard_cap=1e6,
    clamp_dt=True,
):
    """Exponential IMEX for M(t, x); retries with halved dt on instability.

    clamp_dt=False keeps the requested step even past the stability estimate,
    so the caller controls the time grid; instability then raises.
    """
    dt = prob.dt
    m0 = np.asarray(m_fn(0.0), dtype=np.float64)
    cap = stable_dt(m0, c_stab)
    if clamp_dt and np.isfinite(cap):
        dt = min(dt, cap)
    attempts = 0
    while True:
        if dt < dt_min:
            raise StiffnessError(
                f"stable step collapsed below dt_min={dt_min:g}", dt=dt, dt_min=dt_min
            )
        p = LinearProblem(
            u0=prob.u0,
            t_final=prob.t_final,
            dt=dt,
            forcing=prob.forcing,
            snapshot_stride=prob.snapshot_stride,
        )
        m = _VariableMarcher(m_fn, p, s, guard_cap=guard_cap, check_field=check_field)
        try:
            h = m.run(p.times())
        except _Unstable as exc:
            if not adapt:
                raise StiffnessError(
                    f"variable-coefficient step unstable at t={exc.t:g} with dt={dt:g}",
                    dt=dt,
                    dt_min=dt_min,
                ) from None
            dt *= 0.5
            attempts += 1
            continue
        h.meta.update(
            {"solver": "variable", "dt": dt, "dt_halvings": attempts, "min_eta": m.meta()["min_eta"]}
        )
        return h


# ---------------------------------------------------------------------------
# data norms and certificates


def forcing_mean_abs_integral(prob, times):
    """int_0^T |<F>| dt by the trapezoid rule on the given times."""
    vals = np.empty(len(times))
    for i, t in enumerate(times):
        fc = prob.forcing_coeffs(t)
        if fc is None:
            vals[i] = 0.0
        else:
            zero = (slice(None),) + (0,) * prob.grid.d
            vals[i] = float(np.linalg.norm(fc[zero]))
    return float(_trapz(vals, times))


def forcing_ysq(prob, times, s):
    """int_0^T ||P0 F(t)||_{H^s}^2 dt (trapezoid)."""
    vals = np.empty(len(times))
    for i, t in enumerate(times):
        fc = prob.forcing_coeffs(t)
        if fc is None:
            vals[i] = 0.0
        else:
            f = project_mean_free(SpectralField(prob.grid, fc))
            vals[i] = sobolev_norm(f, s) ** 2
    return float(_trapz(vals, times))


def data_norm(prob, s):
    """||U0||_{H^s} + ||P0 F||_{Y^{s-1}} + int |<F>| dt."""
    times = prob.times()
    return (
        sobolev_norm(prob.u0, s)
        + float(np.sqrt(forcing_ysq(prob, times, s - 1.0)))
        + forcing_mean_abs_integral(prob, times)
    )


@dataclass
class EnergyCertificate:
    """Measured energy balance of one constant-coefficient run."""

    s: float
    delta: float
    lhs: float
    rhs_data: float
    ratio: float
    constant_bound: float
    holds: bool

    def to_dict(self):
        return {
            "s": self.s,
            "delta": self.delta,
            "lhs": self.lhs,
            "rhs_data": self.rhs_data,
            "ratio": self.ratio,
            "constant_bound": self.constant_bound,
            "holds": self.holds,
        }


def _mean_free_traces(h, s):
    hs = np.empty(len(h))
    gsq = np.empty(len(h))
    for i in range(len(h)):
        f = project_mean_free(h.state(i))
        hs[i] = sobolev_norm(f, s)
        gsq[i] = fld.grad_sobolev_sq(f, s)
    return hs, gsq


def energy_certificate(h, b, delta, prob, s=None, tol=1e-9):
    """Check X^2 + delta Y^2 <= C(B, delta) (||V0||^2 + ||F||^2/delta)
    on the mean-free parts; the mean mode is bookkept separately."""
    if delta <= 0:
        raise UsageError("delta must be positive")
    s = h.s if s is None else float(s)
    hs, gsq = _mean_free_traces(h, s)
    xsq = float((hs**2).max())
    ysq = float(_trapz(gsq, h.times))
    lhs = xsq + delta * ysq
    rhs = hs[0] ** 2 + forcing_ysq(prob, h.times, s - 1.0) / delta
    const = decay_constant(b, delta)
    ratio = lhs / rhs if rhs > 0 else 0.0
    return EnergyCertificate(
        s=s,
        delta=float(delta),
        lhs=lhs,
        rhs_data=rhs,
        ratio=ratio,
        constant_bound=const,
        holds=bool(ratio <= const * (1.0 + tol)),
    )


def dissipation_identity_ratio(h, delta, s=None):
    """(||P0 V(T)||^2 + 2 delta Y^2) / ||P0 V0||^2: equals 1 exactly for
    the unforced scalar problem with B = delta (Parseval identity)."""
    s = h.s if s is None else float(s)
    hs, gsq = _mean_free_traces(h, s)
    ysq = float(_trapz(gsq, h.times))
    return float((hs[-1] ** 2 + 2.0 * delta * ysq) / hs[0] ** 2)
