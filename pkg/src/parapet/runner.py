"""Mode dispatch: one typed configuration in, one result out.

Every interface (command line, HTTP service, tests) funnels through
:func:`dispatch`, so the numerical behavior cannot drift between them.
Failures surface as the package's typed exceptions; callers map those to
exit codes or HTTP responses.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import NumericalError, UsageError
from .fields import SpectralField, TorusGrid, from_samples, sobolev_norm
from .dyadic import (
    calibrate_bernstein,
    calibrate_equivalence,
    make_partition,
)
from .linear import (
    LinearProblem,
    energy_certificate,
    solve_constant,
)
from .models import (
    SKTParams,
    gamma_at_state,
    make_skt_model,
    skt_initial_data,
    symmetric_part_det_literal,
    symmetric_part_determinant,
    verify_cone_petrovskii,
    verify_sign_preserving,
)
from .nonlinear import IterationKnobs, continue_solution
from .petrovskii import sample_admissible_matrix, verify_exp_decay
from .storage import norm_trace_rows


@dataclasses.dataclass
class RunResult:
    """Outcome of one dispatched mode."""

    mode: str
    report: dict
    history: object = None
    final_field: Optional[SpectralField] = None
    s: float = 2.0
    suite_results: Optional[list] = None

    def trace_rows(self):
        if self.history is None:
            return None
        return norm_trace_rows(self.history)

    def to_payload(self):
        """JSON-ready view used by the HTTP service."""
        payload = {"mode": self.mode, "report": _jsonable(self.report)}
        rows = self.trace_rows()
        payload["trace"] = rows
        if self.final_field is not None:
            grid = self.final_field.grid
            payload["final_state"] = {
                "d": grid.d,
                "n": grid.n,
                "ncomp": self.final_field.ncomp,
                "s": self.s,
                "re": self.final_field.coeffs.real.tolist(),
                "im": self.final_field.coeffs.imag.tolist(),
            }
        else:
            payload["final_state"] = None
        return payload


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def field_from_payload(state):
    """Rebuild a SpectralField from the JSON view in RunResult.to_payload."""
    grid = TorusGrid(int(state["d"]), int(state["n"]))
    coeffs = np.asarray(state["re"], dtype=float) + 1j * np.asarray(
        state["im"], dtype=float
    )
    return SpectralField(grid, coeffs.astype(np.complex128))


# ---------------------------------------------------------------------------
# initial data


def standard_initial_data(grid, ncomp, base, amplitude):
    """Deterministic smooth data: per-component mean plus one oscillation."""
    x = grid.coordinates(0)
    comps = []
    for i in range(ncomp):
        b = base[i % len(base)]
        phase = i * np.pi / 4.0
        wave = np.cos((i + 1) * x + phase)
        if grid.d == 2:
            wave = wave * np.cos(grid.coordinates(1))
        comps.append(b + amplitude * wave)
    return from_samples(grid, np.stack(comps))


def _initial_field(cfg, grid, ncomp, skt=False):
    kind = cfg.init.kind
    if kind == "zero":
        return from_samples(grid, np.zeros((ncomp,) + grid.shape))
    if kind != "standard":
        raise UsageError(f"init.kind must be standard or zero, got {kind!r}")
    if skt:
        return skt_initial_data(grid, base=cfg.init.base[:2],
                                amplitude=cfg.init.amplitude)
    return standard_initial_data(grid, ncomp, cfg.init.base, cfg.init.amplitude)


def _skt_params(cfg):
    k = cfg.skt
    return SKTParams(d1=k.d1, d2=k.d2, a11=k.a11, a12=k.a12, a21=k.a21,
                     a22=k.a22, r1=k.r1, r2=k.r2, s11=k.s11, s12=k.s12,
                     s21=k.s21, s22=k.s22)


def _knobs(cfg):
    p = cfg.picard
    return IterationKnobs(
        theta_small=p.theta_small,
        n_max=p.n_max,
        tol_fixed=p.tol,
        t_min=p.t_min,
        blowup_factor=p.blowup_factor,
        dt_min=p.dt_min,
    )


# ---------------------------------------------------------------------------
# modes


def run_check_petrovskii(cfg):
    from .errors import PetrovskiiViolationError

    pc = cfg.petrovskii
    if pc.samples > 0:
        rng = np.random.default_rng(cfg.seed)
        worst = 0.0
        violations = 0
        for _ in range(pc.samples):
            delta = float(np.exp(rng.uniform(np.log(0.1), np.log(2.0))))
            size = pc.size if pc.size >= 1 else int(rng.integers(2, 5))
            b = sample_admissible_matrix(rng, size, delta)
            t_grid = np.linspace(0.0, 50.0 / delta, pc.t_points)
            rep = verify_exp_decay(b, delta, t_grid)
            worst = max(worst, rep.max_bound_ratio)
            if not (rep.member and rep.max_bound_ratio <= 1.0):
                violations += 1
        report = {
            "mode": "check-petrovskii",
            "samples": pc.samples,
            "violations": violations,
            "worst_ratio": worst,
            "ok": violations == 0,
        }
        if violations:
            raise PetrovskiiViolationError(
                f"{violations} of {pc.samples} randomized decay bounds failed",
                report=report,
            )
        return RunResult(mode=cfg.mode, report=report, s=cfg.s)

    if pc.matrix is None:
        raise UsageError(
            "check-petrovskii needs petrovskii.matrix or petrovskii.samples > 0"
        )
    t_grid = np.linspace(0.0, 50.0 / pc.delta, pc.t_points)
    rep = verify_exp_decay(pc.matrix, pc.delta, t_grid)
    report = {"mode": "check-petrovskii"}
    report.update(rep.to_dict())
    report["ok"] = rep.member and rep.max_bound_ratio <= 1.0
    if not rep.member:
        raise PetrovskiiViolationError(
            f"matrix is outside the admissible class at delta={pc.delta:g} "
            f"(spectral abscissa {rep.gamma:g})",
            matrix=np.asarray(pc.matrix),
            report=report,
        )
    return RunResult(mode=cfg.mode, report=report, s=cfg.s)


def run_solve_linear(cfg):
    if cfg.linear.matrix is None:
        raise UsageError("solve-linear needs linear.matrix")
    b = np.asarray(cfg.linear.matrix, dtype=float)
    grid = TorusGrid(cfg.grid.d, cfg.grid.n)
    u0 = _initial_field(cfg, grid, b.shape[0])
    prob = LinearProblem(
        u0=u0,
        t_final=cfg.time.horizon,
        dt=cfg.time.dt,
        snapshot_stride=cfg.time.stride,
    )
    hist = solve_constant(b, prob, cfg.s)
    x, y, e = _energy(hist)
    drift = float(
        np.abs(
            hist.means - hist.means[0] - hist.forcing_mean_integral
        ).max()
    )
    report = {
        "mode": "solve-linear",
        "t_final": float(hist.times[-1]),
        "steps": len(hist) - 1,
        "s": cfg.s,
        "initial_hs": float(hist.hs[0]),
        "final_hs": float(hist.hs[-1]),
        "x_norm": x,
        "y_norm": y,
        "e_norm": e,
        "mean_drift": drift,
    }
    if cfg.linear.delta is not None:
        cert = energy_certificate(hist, b, cfg.linear.delta, prob, cfg.s)
        report.update({f"certificate_{k}": v for k, v in cert.to_dict().items()})
    return RunResult(
        mode=cfg.mode,
        report=report,
        history=hist,
        final_field=hist.final_field(),
        s=cfg.s,
    )


def _energy(hist):
    from .fields import energy_norms

    return energy_norms(hist)


def _run_continuation(cfg, model):
    hist, est = continue_solution(
        model,
        horizon=cfg.time.horizon,
        dt=cfg.time.dt,
        s=cfg.s,
        t_init=cfg.time.t_init,
        knobs=_knobs(cfg),
    )
    report = {
        "s": cfg.s,
        "dt": cfg.time.dt,
    }
    report.update(est.to_dict())
    if hist is not None:
        x, y, e = _energy(hist)
        report.update({
            "initial_hs": float(hist.hs[0]),
            "x_norm": x,
            "y_norm": y,
            "e_norm": e,
            "steps": len(hist) - 1,
        })
    if not est.completed:
        if est.error is not None:
            raise est.error
        raise NumericalError(f"continuation stopped: {est.reason}")
    return hist, est, report


def run_solve_nonlinear(cfg):
    grid = TorusGrid(cfg.grid.d, cfg.grid.n)
    params = _skt_params(cfg)
    model = make_skt_model(
        params,
        grid=grid,
        u0=_initial_field(cfg, grid, 2, skt=True),
        s=cfg.s,
        retraction_margin=cfg.skt.margin,
    )
    hist, est, report = _run_continuation(cfg, model)
    report["mode"] = "solve-nonlinear"
    return RunResult(
        mode=cfg.mode,
        report=report,
        history=hist,
        final_field=None if hist is None else hist.final_field(),
        s=cfg.s,
    )


def run_skt(cfg):
    grid = TorusGrid(cfg.grid.d, cfg.grid.n)
    params = _skt_params(cfg)
    split = verify_sign_preserving(params, rng=cfg.seed)
    cone = verify_cone_petrovskii(params, box=cfg.skt.box)
    report = {"mode": "skt"}
    report.update({f"split_{k}": v for k, v in split.to_dict().items()})
    report.update({f"cone_{k}": v for k, v in cone.to_dict().items()})

    # symmetric-part probe along u = (t, 0): the quoted form can go negative
    # while the spectral margin stays positive
    ts = np.linspace(0.0, cfg.skt.box, 41)
    u_line = np.stack([ts, np.zeros_like(ts)])
    printed = symmetric_part_determinant(u_line, params)
    literal = symmetric_part_det_literal(u_line, params)
    imin = int(np.argmin(printed))
    report.update({
        "sympart_min": float(printed.min()),
        "sympart_argmin_u1": float(ts[imin]),
        "sympart_literal_min": float(literal.min()),
        "gamma_at_sympart_argmin": gamma_at_state(params, [ts[imin], 0.0]),
    })

    model = make_skt_model(
        params,
        grid=grid,
        u0=_initial_field(cfg, grid, 2, skt=True),
        s=cfg.s,
        retraction_margin=cfg.skt.margin,
    )
    hist, est, cont_report = _run_continuation(cfg, model)
    report.update(cont_report)
    report["mode"] = "skt"
    return RunResult(
        mode=cfg.mode,
        report=report,
        history=hist,
        final_field=None if hist is None else hist.final_field(),
        s=cfg.s,
    )


def run_lp_calibrate(cfg):
    grid = TorusGrid(cfg.grid.d, cfg.grid.n)
    part = make_partition(grid)
    c1, c2 = calibrate_equivalence(part, s=cfg.lp.s, n_fields=cfg.lp.n_fields,
                                   seed=cfg.seed or 11)
    report = {
        "mode": "lp-calibrate",
        "d": grid.d,
        "n": grid.n,
        "j_max": part.j_max,
        "partition_defect": part.partition_defect(),
        "equiv_lower": c1,
        "equiv_upper": c2,
        "s": cfg.lp.s,
    }
    first_deriv = tuple(1 if ax == 0 else 0 for ax in range(grid.d))
    zero_deriv = (0,) * grid.d
    report["bernstein_d1_l2"] = calibrate_bernstein(part, first_deriv, 2)
    report["bernstein_id_sup"] = calibrate_bernstein(part, zero_deriv, np.inf)
    return RunResult(mode=cfg.mode, report=report, s=cfg.s)


def run_suite(cfg):
    from .suite import run_all

    results = run_all(verbose=False)
    report = {"mode": "suite", "criteria": len(results)}
    all_ok = True
    for r in results:
        report[f"{r.name}_pass"] = r.passed
        report[f"{r.name}_seconds"] = round(r.seconds, 3)
        all_ok = all_ok and r.passed
    report["ok"] = all_ok
    return RunResult(mode=cfg.mode, report=report, suite_results=results,
                     s=cfg.s)


_DISPATCH = {
    "check-petrovskii": run_check_petrovskii,
    "solve-linear": run_solve_linear,
    "solve-nonlinear": run_solve_nonlinear,
    "skt": run_skt,
    "lp-calibrate": run_lp_calibrate,
    "suite": run_suite,
}


def apply_thread_limit(threads):
    """Best-effort cap on BLAS threading; returns what was applied."""
    if threads <= 0:
        return "unchanged"
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(threads)
        return f"limited to {threads}"
    except ImportError:
        import os

        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
        return f"env hint {threads}"


def dispatch(cfg: RunConfig) -> RunResult:
    if cfg.threads:
        apply_thread_limit(cfg.threads)
    fn = _DISPATCH.get(cfg.mode)
    if fn is None:
        raise UsageError(f"unknown mode {cfg.mode!r}")
    result = fn(cfg)
    result.report.setdefault("version", __version__)
    return result
