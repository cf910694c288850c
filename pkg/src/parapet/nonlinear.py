"""Quasilinear solver: fixed-point iteration around the frozen-coefficient flow.

The local solve freezes the diffusion matrix at the zero state to build a
reference profile, shrinks the horizon until the reference's gradient norm is
small against the data, and then iterates U_{n+1} = Theta(U_n), where Theta
solves the linear problem with coefficients A(U_n) and forcing F + R(U_n).
Distances between iterates are measured in the combined energy norm; the
iteration is declared contractive, convergent, divergent, or blown up from
that trail.  Longer horizons are reached by chaining local solves.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from .errors import (
    BlowUpError,
    DataTooLargeError,
    DivergenceError,
    NumericalError,
    PetrovskiiViolationError,
    StiffnessError,
    UsageError,
)
from .fields import (
    SpectralField,
    _trapz,
    apply_divergence_form,
    build_history,
    dealias,
    dealias_samples,
    difference_energy_norms,
    energy_norms,
    sobolev_norm,
    to_real_samples,
    transform_samples,
)
from .linear import (
    LinearProblem,
    data_norm,
    solve_variable,
    stable_dt,
)
from .petrovskii import field_margin_eta


@dataclasses.dataclass
class IterationKnobs:
    """Tuning constants for the local fixed-point solve."""

    theta_small: float = 0.25
    n_max: int = 50
    tol_fixed: float = 1e-9
    polish_floor: float = 1e-12
    t_min: float = 1e-6
    blowup_factor: float = 1e6
    c_stab: float = 0.5
    dt_min: float = 1e-8
    divergence_window: int = 4


@dataclasses.dataclass
class PicardReport:
    """Trail of one local fixed-point solve."""

    converged: bool
    iterations: int
    iterations_to_tol: Optional[int]
    distances: list
    ratios: list
    ball_radius: float
    ball_ok: bool
    t_local: float
    dt: float
    d_norm: float
    y_free: float
    threshold: float
    horizon_halvings: int
    dt_restarts: int

    @property
    def final_distance(self):
        return self.distances[-1] if self.distances else 0.0

    def to_dict(self):
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "iterations_to_tol": self.iterations_to_tol,
            "final_distance": self.final_distance,
            "first_distance": self.distances[0] if self.distances else 0.0,
            "max_ratio": max(self.ratios) if self.ratios else 0.0,
            "ball_radius": self.ball_radius,
            "ball_ok": self.ball_ok,
            "t_local": self.t_local,
            "dt": self.dt,
            "d_norm": self.d_norm,
            "y_free": self.y_free,
            "threshold": self.threshold,
            "horizon_halvings": self.horizon_halvings,
            "dt_restarts": self.dt_restarts,
        }


# ---------------------------------------------------------------------------
# one application of the affine solution map


def _state_samples(grid, field):
    """Dealiased real samples of a spectral state."""
    return to_real_samples(dealias(field))


def _combined_forcing(model, u_hist):
    """Forcing F(t) + R(U(t)) along a given iterate, as a callable.

    Returns None when the model has neither forcing nor reaction, keeping
    the cheap unforced path.
    """
    base = model.forcing
    if base is None and not model.has_reaction():
        return None
    grid = u_hist.grid

    def forcing(t):
        if callable(base):
            f = base(t)
            fc = f.coeffs if isinstance(f, SpectralField) else np.asarray(f)
        elif isinstance(base, SpectralField):
            fc = base.coeffs
        elif base is None:
            fc = None
        else:
            fc = np.asarray(base, dtype=np.complex128)
        if model.has_reaction():
            samples = _state_samples(grid, u_hist.state_at(t))
            r = dealias_samples(grid, model.reaction_samples(samples))
            rc = transform_samples(grid, r)
            fc = rc if fc is None else fc + rc
        return SpectralField(grid, fc)

    return forcing


def picard_step(model, u_hist, s=None, knobs=None):
    """Solve the linear problem with coefficients frozen along u_hist.

    The result lives on exactly the time grid of u_hist; instability at that
    step size raises StiffnessError rather than silently refining.
    """
    knobs = knobs or IterationKnobs()
    s = model.s if s is None else s
    grid = u_hist.grid
    if model.u0 is None:
        raise UsageError("model has no initial data")
    times = u_hist.times
    if len(times) < 2:
        raise UsageError("iterate history needs at least two time points")
    dt = float(times[1] - times[0])

    def m_fn(t):
        samples = _state_samples(grid, u_hist.state_at(t))
        return dealias_samples(grid, model.matrix_samples(samples))

    prob = LinearProblem(
        u0=model.u0,
        t_final=float(times[-1]),
        dt=dt,
        forcing=_combined_forcing(model, u_hist),
        snapshot_stride=1,
    )
    return solve_variable(
        m_fn,
        prob,
        s,
        c_stab=knobs.c_stab,
        dt_min=knobs.dt_min,
        adapt=False,
        check_field=True,
        guard_cap=knobs.blowup_factor,
        clamp_dt=False,
    )


def _uniform_times(t_final, dt):
    n = max(int(np.ceil(t_final / dt - 1e-12)), 1)
    return np.linspace(0.0, t_final, n + 1)


def _zero_history(model, t_final, dt, s):
    grid = model.u0.grid
    times = _uniform_times(t_final, dt)
    zero = np.zeros((len(times), model.ncomp) + grid.shape, dtype=np.complex128)
    return build_history(grid, s, times, list(zero))


def reference_profile(model, t_final, dt, s=None, knobs=None):
    """Frozen-coefficient flow: coefficients A(0), forcing F alone.

    Implemented as one solution-map application to the zero iterate, so the
    reference is produced by the same code path as every later iterate.
    """
    s = model.s if s is None else s
    return picard_step(model, _zero_history(model, t_final, dt, s), s, knobs)


# ---------------------------------------------------------------------------
# local solve


def solve_local(model, t_init, dt, s=None, knobs=None):
    """Fixed-point solve on a self-selected horizon.

    Halves the horizon until the reference profile satisfies the smallness
    threshold, then iterates the solution map to the fixed-point tolerance
    (and beyond, to a polish level that makes bookkeeping identities sharp).
    Returns (history, PicardReport).
    """
    knobs = knobs or IterationKnobs()
    s = model.s if s is None else s
    if model.u0 is None:
        raise UsageError("model has no initial data")
    grid = model.u0.grid

    initial_hs = sobolev_norm(model.u0, s)
    blow_threshold = knobs.blowup_factor * max(initial_hs, 1e-30)

    # horizon selection from the reference profile
    t_local = float(t_init)
    halvings = 0
    dt_seg = float(dt)
    m0 = model.matrix_samples(_state_samples(grid, model.u0))
    cap = stable_dt(m0, knobs.c_stab)
    if np.isfinite(cap):
        dt_seg = min(dt_seg, cap)

    dt_restarts = 0
    while True:
        try:
            while True:
                if t_local < knobs.t_min:
                    raise DataTooLargeError(
                        "horizon collapsed below t_min before the smallness "
                        "threshold was met",
                        data_norm=d_norm if halvings else None,
                        horizon=t_local,
                    )
                dt_use = min(dt_seg, t_local)
                probe = LinearProblem(
                    u0=model.u0, t_final=t_local, dt=dt_use,
                    forcing=model.forcing, snapshot_stride=1,
                )
                d_norm = data_norm(probe, s)
                threshold = knobs.theta_small / (1.0 + d_norm)
                u_ref = reference_profile(model, t_local, dt_use, s, knobs)
                y_free = energy_norms(u_ref, s)[1]
                if y_free <= threshold:
                    break
                t_local *= 0.5
                halvings += 1

            polish = min(knobs.tol_fixed, knobs.polish_floor * (1.0 + d_norm))
            distances = []
            ratios = []
            ball_max = 0.0
            u_prev = u_ref
            converged = False
            iterations_to_tol = None
            n_done = 0
            for n in range(1, knobs.n_max + 1):
                u_next = picard_step(model, u_prev, s, knobs)
                n_done = n
                x_next = float(u_next.hs.max())
                if not np.isfinite(x_next) or x_next >= blow_threshold:
                    raise BlowUpError(
                        "iterate norm crossed the blow-up threshold",
                        time=float(u_next.times[int(np.argmax(u_next.hs))]),
                        norm=x_next,
                        threshold=blow_threshold,
                    )
                dist = difference_energy_norms(u_next, u_prev, s)[2]
                distances.append(dist)
                if n >= 2:
                    ratios.append(dist / max(distances[-2], 1e-300))
                ball_max = max(
                    ball_max, difference_energy_norms(u_next, u_ref, s)[2]
                )
                u_prev = u_next
                if iterations_to_tol is None and dist <= knobs.tol_fixed:
                    iterations_to_tol = n
                    converged = True
                if dist <= polish:
                    break
                if converged and n >= 2 and dist >= distances[-2]:
                    break  # roundoff floor reached
                if (
                    not converged
                    and len(ratios) >= knobs.divergence_window
                    and all(r >= 1.0 for r in ratios[-knobs.divergence_window:])
                ):
                    raise DivergenceError(
                        "iteration is not contracting",
                        ratios=ratios,
                        distances=distances,
                    )
            if not converged:
                raise DivergenceError(
                    f"tolerance {knobs.tol_fixed:g} not reached in "
                    f"{knobs.n_max} iterations",
                    ratios=ratios,
                    distances=distances,
                )
            break
        except StiffnessError:
            dt_seg *= 0.5
            dt_restarts += 1
            if dt_seg < knobs.dt_min:
                raise

    ball_radius = 2.0 * distances[0] if distances else 0.0
    report = PicardReport(
        converged=converged,
        iterations=n_done,
        iterations_to_tol=iterations_to_tol,
        distances=distances,
        ratios=ratios,
        ball_radius=ball_radius,
        ball_ok=ball_max <= ball_radius * (1.0 + 1e-12) if distances else True,
        t_local=t_local,
        dt=float(u_prev.times[1] - u_prev.times[0]),
        d_norm=d_norm,
        y_free=y_free,
        threshold=threshold,
        horizon_halvings=halvings,
        dt_restarts=dt_restarts,
    )
    u_prev.meta.update({
        "picard_iterations": n_done,
        "picard_converged": converged,
        "t_local": t_local,
    })
    return u_prev, report


# ---------------------------------------------------------------------------
# residual measurement


def _fd_time_derivative(states, dt):
    """Second-order finite-difference time derivative along axis 0."""
    if states.shape[0] < 3:
        raise UsageError("residual needs at least three time points")
    out = np.empty_like(states)
    out[1:-1] = (states[2:] - states[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * states[0] + 4.0 * states[1] - states[2]) / (2.0 * dt)
    out[-1] = (3.0 * states[-1] - 4.0 * states[-2] + states[-3]) / (2.0 * dt)
    return out


def _check_uniform(times):
    steps = np.diff(times)
    dt = float(steps[0])
    if np.max(np.abs(steps - dt)) > 1e-9 * max(dt, 1.0):
        raise UsageError("residual requires a uniform time grid")
    return dt


def _residual_norm(grid, s, times, states, rhs_at, d_norm):
    dt = _check_uniform(times)
    dstates = _fd_time_derivative(states, dt)
    vals = np.empty(len(times))
    for i in range(len(times)):
        r = SpectralField(grid, dstates[i] - rhs_at(i))
        vals[i] = sobolev_norm(r, s - 1.0) ** 2
    y_r = float(np.sqrt(max(_trapz(vals, times), 0.0)))
    return y_r / (1.0 + d_norm)


def _data_norm_of_history(model, hist, s):
    prob = LinearProblem(
        u0=hist.initial_field(),
        t_final=float(hist.times[-1]),
        dt=float(hist.times[1] - hist.times[0]),
        forcing=model.forcing,
        snapshot_stride=1,
    )
    return data_norm(prob, s)


def _forcing_coeffs_at(model, grid, t):
    f = model.forcing
    if f is None:
        return None
    if callable(f):
        f = f(t)
    if isinstance(f, SpectralField):
        return f.coeffs
    return np.asarray(f, dtype=np.complex128)


def residual(model, hist, s=None):
    """Normalized equation residual of a discrete trajectory.

    Finite-difference time derivative minus the divergence-form diffusion,
    forcing, and reaction, measured in the time-integrated H^{s-1} norm and
    normalized by one plus the data norm.
    """
    s = model.s if s is None else s
    grid = hist.grid
    d_norm = _data_norm_of_history(model, hist, s)

    def rhs_at(i):
        field = hist.state(i)
        samples = _state_samples(grid, field)
        m = dealias_samples(grid, model.matrix_samples(samples))
        rhs = apply_divergence_form(m, field).coeffs.copy()
        fc = _forcing_coeffs_at(model, grid, float(hist.times[i]))
        if fc is not None:
            rhs += fc
        if model.has_reaction():
            r = dealias_samples(grid, model.reaction_samples(samples))
            rhs += transform_samples(grid, r)
        return rhs

    return _residual_norm(grid, s, hist.times, hist.states, rhs_at, d_norm)


def discretization_residual_scale(model, hist, s=None):
    """Residual scale of the time discretization at this grid and step.

    Solves one linear problem with coefficients and reaction frozen along
    the reference profile, by the same integrator at the same step, and
    measures its residual against that same (fully known) linear equation
    with the same normalization.  That value is the size the residual
    functional assigns to a trajectory that is exact up to the scheme's own
    time-discretization error, so it is the honest comparison scale for
    :func:`residual`; it does not depend on the trajectory being judged.
    """
    s = model.s if s is None else s
    grid = hist.grid
    d_norm = _data_norm_of_history(model, hist, s)
    t_final = float(hist.times[-1])
    dt = float(hist.times[1] - hist.times[0])
    u_ref = reference_profile(model, t_final, dt, s)
    u1 = picard_step(model, u_ref, s)

    def rhs_at(i):
        samples = _state_samples(grid, u_ref.state(i))
        m = dealias_samples(grid, model.matrix_samples(samples))
        rhs = apply_divergence_form(m, u1.state(i)).coeffs.copy()
        fc = _forcing_coeffs_at(model, grid, float(u1.times[i]))
        if fc is not None:
            rhs += fc
        if model.has_reaction():
            r = dealias_samples(grid, model.reaction_samples(samples))
            rhs += transform_samples(grid, r)
        return rhs

    return _residual_norm(grid, s, u1.times, u1.states, rhs_at, d_norm)


# ---------------------------------------------------------------------------
# continuation and lifetime


@dataclasses.dataclass
class LifetimeEstimate:
    """Outcome of chaining local solves toward a target horizon."""

    horizon: float
    t_reached: float
    completed: bool
    reason: str
    blown_up: bool
    final_hs: float
    min_state: float
    sign_ok: bool
    n_segments: int
    segments: list
    error: Optional[Exception] = None

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "t_reached": self.t_reached,
            "completed": self.completed,
            "reason": self.reason,
            "blown_up": self.blown_up,
            "final_hs": self.final_hs,
            "min_state": self.min_state,
            "sign_ok": self.sign_ok,
            "n_segments": self.n_segments,
            "error": str(self.error) if self.error else "",
        }


def _shifted_forcing(forcing, t0):
    if forcing is None or t0 == 0.0:
        return forcing
    if callable(forcing):
        return lambda t: forcing(t + t0)
    return forcing  # constant in time


def history_min_value(hist):
    """Smallest real sample over all stored states and components."""
    grid = hist.grid
    axes = tuple(range(2, 2 + grid.d))
    samples = np.fft.ifftn(hist.states, axes=axes).real * grid.size
    return float(samples.min())


def _concat_histories(grid, s, segments):
    times = [segments[0].times]
    states = [segments[0].states]
    fmi = [np.asarray(segments[0].forcing_mean_integral)]
    offset_t = float(segments[0].times[-1])
    for seg in segments[1:]:
        times.append(seg.times[1:] + offset_t)
        states.append(seg.states[1:])
        base = fmi[-1][-1]
        fmi.append(np.asarray(seg.forcing_mean_integral)[1:] + base)
        offset_t += float(seg.times[-1])
    return build_history(
        grid,
        s,
        np.concatenate(times),
        list(np.concatenate(states)),
        forcing_mean_integral=np.concatenate(fmi),
        meta={"solver": "continuation", "n_segments": len(segments)},
    )


def continue_solution(model, horizon, dt, s=None, t_init=None, knobs=None,
                      max_segments=100000):
    """Chain local solves to the horizon; stop cleanly on failure.

    Returns (history, LifetimeEstimate); history is None when no segment
    completed.  Failures (data too large, blow-up, stiffness, divergence,
    admissibility loss) end the continuation and are recorded on the
    estimate rather than raised, so partial progress is preserved.
    """
    knobs = knobs or IterationKnobs()
    s = model.s if s is None else s
    if model.u0 is None:
        raise UsageError("model has no initial data")
    if horizon <= 0:
        raise UsageError("horizon must be positive")
    grid = model.u0.grid
    t_init = min(1.0, horizon) if t_init is None else min(t_init, horizon)

    t_reached = 0.0
    u0 = model.u0
    segments = []
    seg_info = []
    reason = "horizon"
    error = None
    blown = False
    min_state = np.inf
    tiny = 1e-12 * horizon
    while t_reached < horizon - tiny:
        if len(segments) >= max_segments:
            reason = "segment-limit"
            break
        seg_t = min(t_init, horizon - t_reached)
        seg_model = dataclasses.replace(
            model, u0=u0, forcing=_shifted_forcing(model.forcing, t_reached)
        )
        try:
            hist, rep = solve_local(seg_model, seg_t, dt, s, knobs)
        except DataTooLargeError as exc:
            reason = "horizon-collapse"
            error = exc
            break
        except BlowUpError as exc:
            reason = "blow-up"
            blown = True
            error = exc
            break
        except StiffnessError as exc:
            reason = "stiffness"
            error = exc
            break
        except DivergenceError as exc:
            reason = "divergence"
            error = exc
            break
        except PetrovskiiViolationError as exc:
            reason = "petrovskii"
            error = exc
            break
        segments.append(hist)
        seg_min = history_min_value(hist)
        min_state = min(min_state, seg_min)
        seg_info.append({
            "t0": t_reached,
            "t1": t_reached + rep.t_local,
            "t_local": rep.t_local,
            "iterations": rep.iterations,
            "final_distance": rep.final_distance,
            "dt": rep.dt,
            "min_state": seg_min,
        })
        t_reached += rep.t_local
        u0 = hist.final_field()
        if model.cone_only:
            msamp = model.matrix_samples(_state_samples(grid, u0))
            stacked = np.moveaxis(msamp.reshape(msamp.shape[:2] + (-1,)), -1, 0)
            eta = field_margin_eta(stacked)
            if eta <= 0.0:
                reason = "petrovskii"
                error = PetrovskiiViolationError(
                    "diffusion matrix left the admissible class at a restart",
                    report={"eta": float(eta), "t": t_reached},
                )
                break

    history = _concat_histories(grid, s, segments) if segments else None
    final_hs = float(history.hs[-1]) if history is not None else float("nan")
    completed = t_reached >= horizon - tiny
    if completed:
        reason = "horizon"
    estimate = LifetimeEstimate(
        horizon=float(horizon),
        t_reached=float(t_reached),
        completed=completed,
        reason=reason,
        blown_up=blown,
        final_hs=final_hs,
        min_state=float(min_state) if segments else float("nan"),
        sign_ok=bool(segments) and min_state >= -1e-8,
        n_segments=len(segments),
        segments=seg_info,
        error=error,
    )
    return history, estimate


# ---------------------------------------------------------------------------
# stability of the data-to-solution map


def _difference_data_norm(model_a, model_b, grid, times, s):
    du0 = sobolev_norm(model_a.u0 - model_b.u0, s)
    fa = model_a.forcing
    fb = model_b.forcing
    if fa is None and fb is None:
        return du0
    zero = np.zeros((model_a.ncomp,) + grid.shape, dtype=np.complex128)

    def diff(t):
        ca = _forcing_coeffs_at(model_a, grid, t)
        cb = _forcing_coeffs_at(model_b, grid, t)
        ca = zero if ca is None else ca
        cb = zero if cb is None else cb
        return SpectralField(grid, ca - cb)

    prob = LinearProblem(
        u0=model_a.u0 - model_b.u0,
        t_final=float(times[-1]),
        dt=float(times[1] - times[0]),
        forcing=diff,
        snapshot_stride=1,
    )
    return data_norm(prob, s)


def stability_check(model_a, model_b, t_init, dt, s=None, knobs=None,
                    max_rounds=6):
    """Solution-map stability ratio for two nearby data sets.

    Solves both models on a common horizon and time grid and returns
    ||U_a - U_b||_E / ||data_a - data_b||_D together with the ingredients.
    """
    knobs = knobs or IterationKnobs()
    s = model_a.s if s is None else s
    grid = model_a.u0.grid
    t_try = float(t_init)
    dt_try = float(dt)
    for _ in range(max_rounds):
        ha, ra = solve_local(model_a, t_try, dt_try, s, knobs)
        hb, rb = solve_local(model_b, t_try, dt_try, s, knobs)
        t_common = min(ra.t_local, rb.t_local)
        dt_common = min(ra.dt, rb.dt)
        if (
            abs(ra.t_local - t_common) <= 1e-12
            and abs(rb.t_local - t_common) <= 1e-12
            and abs(ra.dt - dt_common) <= 1e-15
            and abs(rb.dt - dt_common) <= 1e-15
        ):
            break
        t_try, dt_try = t_common, dt_common
    else:
        raise NumericalError(
            "could not align horizons for the stability comparison"
        )
    e_diff = difference_energy_norms(ha, hb, s)[2]
    d_diff = _difference_data_norm(model_a, model_b, grid, ha.times, s)
    if d_diff == 0.0:
        raise UsageError("stability check needs distinct data")
    return {
        "ratio": e_diff / d_diff,
        "e_diff": e_diff,
        "d_diff": d_diff,
        "t_common": t_common,
        "dt": dt_common,
        "iterations_a": ra.iterations,
        "iterations_b": rb.iterations,
    }
