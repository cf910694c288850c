"""Acceptance battery: ten numbered checks with pinned tolerances.

Each criterion function returns a CriterionResult and is independent of the
others; run_all executes them in order and reports one line per criterion.
The same functions back tests/test_acceptance.py and the command line's
suite mode, so the shipped gate and the test gate cannot diverge.
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np
import scipy.linalg

from .dyadic import (
    block,
    calibrate_bernstein,
    commutator_decomposition,
    low_pass,
    make_partition,
    verify_bernstein,
)
from .errors import DataTooLargeError
from .fields import SpectralField, TorusGrid, dealias_samples, from_samples
from .linear import (
    LinearProblem,
    dissipation_identity_ratio,
    energy_certificate,
    solve_constant,
    solve_time_dependent,
    solve_variable,
)
from .models import (
    SKTParams,
    gamma_at_state,
    make_skt_model,
    skt_initial_data,
    symmetric_part_determinant,
    verify_cone_petrovskii,
)
from .nonlinear import (
    IterationKnobs,
    continue_solution,
    discretization_residual_scale,
    residual,
    solve_local,
    stability_check,
)
from .petrovskii import sample_admissible_matrix, verify_exp_decay

SUITE_SEED = 20260819


@dataclasses.dataclass
class CriterionResult:
    name: str
    passed: bool
    seconds: float
    budget: float
    detail: dict

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        keys = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"{status} {self.name} ({self.seconds:.2f}s/{self.budget:.0f}s) {keys}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)


def _result(name, budget, t0, passed, detail):
    seconds = time.time() - t0
    passed = bool(passed) and seconds <= budget
    return CriterionResult(name=name, passed=passed, seconds=seconds,
                           budget=budget, detail=detail)


# ---------------------------------------------------------------------------


def criterion_1_decay_bounds():
    """200 seeded admissible matrices: zero decay-bound violations."""
    t0 = time.time()
    rng = np.random.default_rng(SUITE_SEED)
    violations = 0
    worst = 0.0
    for _ in range(200):
        delta = float(np.exp(rng.uniform(np.log(0.1), np.log(2.0))))
        nn = int(rng.integers(2, 5))
        b = sample_admissible_matrix(rng, nn, delta)
        t_grid = np.linspace(0.0, 50.0 / delta, 50)
        rep = verify_exp_decay(b, delta, t_grid)
        worst = max(worst, rep.max_bound_ratio)
        if not (rep.member and rep.max_bound_ratio <= 1.0):
            violations += 1
    return _result(
        "decay-bounds", 10.0, t0, violations == 0,
        {"violations": violations, "worst_ratio": worst},
    )


def criterion_2_exact_propagation():
    """Single-mode transport matches the matrix exponential; forced solve
    converges at second order."""
    t0 = time.time()
    grid = TorusGrid(1, 32)
    b = np.array([[2.0, 1.0], [0.0, 3.0]])
    k = 3
    lam = float(k * k)
    v = np.array([1.0, 0.5 - 0.25j])
    coeffs = np.zeros((2, 32), dtype=np.complex128)
    coeffs[:, k] = v
    u0 = SpectralField(grid, coeffs)
    t_final = 0.7
    prob = LinearProblem(u0=u0, t_final=t_final, dt=0.07, snapshot_stride=1)
    hist = solve_constant(b, prob, 2.0)
    exact = scipy.linalg.expm(-lam * t_final * b) @ v
    prop_err = float(np.abs(hist.states[-1][:, k] - exact).max())

    # forced problem with a closed-form solution (oscillating forcing)
    omega = 3.0
    kf = 2
    lamf = float(kf * kf)
    g = lamf * b
    w = np.array([0.8, -0.5])
    fc = np.zeros((2, 32), dtype=np.complex128)
    fc[:, kf] = w
    f_field = SpectralField(grid, fc)

    def forcing(t):
        return f_field * np.sin(omega * t)

    t_end = 0.5
    gi = g + 1j * omega * np.eye(2)
    closed = (
        scipy.linalg.expm(-g * t_end)
        @ np.linalg.solve(gi, scipy.linalg.expm(gi * t_end) - np.eye(2))
        @ w
    ).imag
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        p = LinearProblem(u0=SpectralField(grid, np.zeros_like(fc)),
                          t_final=t_end, dt=dt, forcing=forcing,
                          snapshot_stride=1)
        h = solve_constant(b, p, 2.0)
        errs.append(float(np.abs(h.states[-1][:, kf].real - closed).max()))
    orders = [float(np.log2(errs[i] / errs[i + 1])) for i in range(2)]
    ok = prop_err <= 1e-12 and all(o >= 1.9 for o in orders)
    return _result(
        "exact-propagation", 5.0, t0, ok,
        {"propagation_error": prop_err, "orders": [round(o, 3) for o in orders]},
    )


def criterion_3_energy_certificates():
    """50 randomized constant-coefficient certificates plus the sharp scalar
    dissipation identity."""
    t0 = time.time()
    rng = np.random.default_rng(SUITE_SEED + 3)
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    waves = np.array([np.cos(x), np.sin(2 * x), np.cos(3 * x)])
    violations = 0
    worst = 0.0
    for i in range(50):
        delta = float(np.exp(rng.uniform(np.log(0.1), np.log(2.0))))
        nn = int(rng.integers(1, 4))
        b = sample_admissible_matrix(rng, nn, delta)
        u0 = from_samples(grid, np.stack([rng.normal(size=3) @ waves
                                          for _ in range(nn)]))
        forcing = None
        if i % 2:
            famp = rng.uniform(0.1, 1.0)
            forcing = from_samples(
                grid, famp * np.stack([rng.normal(size=3) @ waves + rng.normal()
                                       for _ in range(nn)]))
        prob = LinearProblem(u0=u0, t_final=3.0 / delta,
                             dt=min(2e-3 / delta, 2e-3),
                             forcing=forcing, snapshot_stride=1)
        hist = solve_constant(b, prob, 2.0)
        cert = energy_certificate(hist, b, delta, prob, 2.0)
        worst = max(worst, cert.ratio / cert.constant_bound)
        if not cert.holds:
            violations += 1

    u0s = from_samples(grid, (0.3 * np.cos(x))[None, :])
    prob_s = LinearProblem(u0=u0s, t_final=3.0, dt=1e-3, snapshot_stride=1)
    hist_s = solve_constant(np.array([[1.0]]), prob_s, 2.0)
    sharp = dissipation_identity_ratio(hist_s, 1.0)
    ok = violations == 0 and abs(sharp - 1.0) <= 1e-6
    return _result(
        "energy-certificates", 30.0, t0, ok,
        {"violations": violations, "worst_fraction": worst,
         "sharp_ratio_err": abs(sharp - 1.0)},
    )


def criterion_4_mean_bookkeeping():
    """Mean ledger matches an independent trapezoid recomputation on every
    solver path, within 1e-10."""
    t0 = time.time()
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    b0 = np.array([[1.5, 0.4], [0.2, 2.0]])
    u0 = from_samples(grid, np.stack([1.0 + 0.2 * np.cos(x),
                                      0.5 + 0.1 * np.sin(x)]))
    fbase = from_samples(grid, np.stack([0.3 + 0.1 * np.cos(2 * x),
                                         -0.2 + 0.05 * np.sin(x)]))

    def forcing(t):
        return fbase * (1.0 + np.sin(3.0 * t))

    worst = 0.0

    def check(hist, forcing_fn):
        nonlocal worst
        times = hist.times
        vals = np.stack([
            forcing_fn(t).coeffs[:, 0] if forcing_fn else np.zeros(2)
            for t in times
        ])
        integ = np.zeros_like(vals)
        for i in range(1, len(times)):
            integ[i] = integ[i - 1] + 0.5 * (times[i] - times[i - 1]) * (
                vals[i] + vals[i - 1]
            )
        drift = np.abs(hist.means - hist.means[0] - integ).max()
        worst = max(worst, float(drift))

    prob = LinearProblem(u0=u0, t_final=0.8, dt=2e-3, forcing=forcing,
                         snapshot_stride=1)
    check(solve_constant(b0, prob, 2.0), forcing)

    b1 = np.array([[0.3, 0.0], [0.1, 0.2]])

    def m_time(t):
        return b0 + np.sin(2.0 * t) * b1

    check(solve_time_dependent(m_time, prob, 2.0), forcing)

    base_profile = 1.0 + 0.3 * np.cos(x)

    def m_var(t):
        u_frozen = np.stack([base_profile * (1.0 + 0.1 * np.sin(t)),
                             0.5 * base_profile])
        from .models import skt_matrix

        return skt_matrix(u_frozen, SKTParams())

    check(solve_variable(m_var, prob, 2.0), forcing)

    # nonlinear path with reaction: recompute <R(U)> from the returned iterate
    params = SKTParams(r1=1.0, r2=0.8, s11=1.0, s12=0.4, s21=0.3, s22=1.0)
    model = make_skt_model(params, grid=TorusGrid(1, 64))
    hist, _ = solve_local(model, t_init=0.5, dt=1e-3)
    g64 = model.u0.grid
    from .nonlinear import _state_samples

    rmeans = np.stack([
        dealias_samples(
            g64, model.reaction_samples(_state_samples(g64, hist.state(i)))
        ).mean(axis=1)
        for i in range(len(hist))
    ])
    integ = np.zeros_like(rmeans)
    for i in range(1, len(hist)):
        integ[i] = integ[i - 1] + 0.5 * (hist.times[i] - hist.times[i - 1]) * (
            rmeans[i] + rmeans[i - 1]
        )
    drift_nl = float(np.abs(hist.means.real - hist.means.real[0] - integ).max())
    worst = max(worst, drift_nl)
    return _result(
        "mean-bookkeeping", 60.0, t0, worst <= 1e-10,
        {"worst_drift": worst, "nonlinear_drift": drift_nl},
    )


def criterion_5_littlewood_paley():
    """Partition, resummation, disjointness, commutator, and Bernstein checks
    on the dyadic machinery."""
    t0 = time.time()
    rng = np.random.default_rng(SUITE_SEED + 5)
    ok = True
    detail = {}
    part_defect = 0.0
    resum_defect = 0.0
    disjoint = 0.0
    comm_worst = 0.0
    bern_worst = 0.0
    for (d, n) in ((1, 128), (2, 32)):
        grid = TorusGrid(d, n)
        part = make_partition(grid)
        part_defect = max(part_defect, part.partition_defect())
        f = from_samples(grid, rng.standard_normal((1,) + grid.shape))
        for j in (-1, 0, part.j_max):
            acc = low_pass(part, f, j).coeffs.copy()
            for jp in range(j, part.j_max + 1):
                acc += block(part, f, jp).coeffs
            resum_defect = max(resum_defect,
                               float(np.abs(acc - f.coeffs).max()))
        for j in range(-1, part.j_max + 1):
            for jp in range(j + 2, part.j_max + 1):
                disjoint = max(
                    disjoint,
                    float((part.multiplier(j) * part.multiplier(jp)).max()),
                )
        n_pairs = 50
        for _ in range(n_pairs):
            a = rng.standard_normal(grid.shape)
            a *= rng.uniform(0.5, 2.0) / max(np.abs(a).max(), 1e-12)
            ff = from_samples(grid, rng.standard_normal((1,) + grid.shape))
            j = int(rng.integers(0, part.j_max + 1))
            out = commutator_decomposition(part, a, ff, j)
            comm_worst = max(comm_worst, out["residual"] / out["scale"])
        first_deriv = tuple(1 if ax == 0 else 0 for ax in range(d))
        for (alpha, q) in ((first_deriv, 2), ((0,) * d, np.inf)):
            cal = calibrate_bernstein(part, alpha, q)
            for _ in range(5):
                ff = from_samples(grid, rng.standard_normal((1,) + grid.shape))
                for j in range(-1, part.j_max + 1):
                    val = verify_bernstein(part, ff, j, alpha, q)
                    bern_worst = max(bern_worst, val / cal)
    ok = (
        part_defect <= 1e-8
        and resum_defect <= 1e-10
        and disjoint == 0.0
        and comm_worst <= 1e-10
        and bern_worst <= 1.05
    )
    detail = {
        "partition_defect": part_defect,
        "resummation_defect": resum_defect,
        "disjointness": disjoint,
        "commutator_worst": comm_worst,
        "bernstein_worst_fraction": bern_worst,
    }
    return _result("littlewood-paley", 20.0, t0, ok, detail)


def _standard_model(reaction=False):
    params = SKTParams(d1=1.0, d2=1.0, a11=0.5, a12=0.5, a21=0.5, a22=0.5)
    if reaction:
        params = SKTParams(d1=1.0, d2=1.0, a11=0.5, a12=0.5, a21=0.5,
                           a22=0.5, r1=1.0, r2=0.8, s11=1.0, s12=0.4,
                           s21=0.3, s22=1.0)
    return make_skt_model(params, grid=TorusGrid(1, 64))


def criterion_6_picard_contraction():
    """Reference cross-diffusion case: contraction, fast convergence, and a
    residual at the discretization scale."""
    t0 = time.time()
    model = _standard_model(reaction=False)
    hist, rep = solve_local(model, t_init=1.0, dt=1e-3)
    res = residual(model, hist)
    scale = discretization_residual_scale(model, hist)
    contracting = all(r < 1.0 for r in rep.ratios[1:]) and len(rep.ratios) >= 1
    ok = (
        contracting
        and rep.iterations_to_tol is not None
        and rep.iterations_to_tol <= 10
        and res <= 10.0 * scale
    )
    return _result(
        "picard-contraction", 60.0, t0, ok,
        {"iterations_to_tol": rep.iterations_to_tol,
         "max_ratio": max(rep.ratios) if rep.ratios else None,
         "residual_over_scale": res / scale},
    )


def criterion_7_stability():
    """Perturbation response scales linearly: ratios for eps and eps/2 agree
    within 20 percent."""
    t0 = time.time()
    model = _standard_model(reaction=False)
    grid = model.u0.grid
    x = grid.coordinates(0)
    ratios = []
    for eps in (1e-3, 5e-4):
        du = from_samples(
            grid, np.stack([eps * np.cos(2 * x), -eps * np.sin(x)])
        )
        pert = dataclasses.replace(model, u0=model.u0 + du)
        out = stability_check(model, pert, t_init=0.25, dt=2e-3)
        ratios.append(out["ratio"])
    spread = abs(ratios[0] / ratios[1] - 1.0)
    return _result(
        "stability", 120.0, t0, spread <= 0.2,
        {"ratio_eps": ratios[0], "ratio_half": ratios[1], "spread": spread},
    )


def criterion_8_sign_preservation():
    """Ten seeded positive-data runs keep every component above -1e-8."""
    t0 = time.time()
    grid = TorusGrid(1, 64)
    x = grid.coordinates(0)
    params = SKTParams(d1=1.0, d2=1.0, a11=0.5, a12=0.5, a21=0.5, a22=0.5,
                       r1=1.0, r2=0.8, s11=1.0, s12=0.4, s21=0.3, s22=1.0)
    worst = np.inf
    failures = 0
    for seed in range(10):
        rng = np.random.default_rng(SUITE_SEED + seed)
        base = rng.uniform(0.5, 1.5, size=2)
        profs = []
        for i in range(2):
            amp = rng.uniform(0.1, 0.4)
            prof = base[i] + amp * (
                rng.normal() * np.cos(x) + rng.normal() * np.sin(x)
                + 0.3 * rng.normal() * np.cos(2 * x)
            ) / 2.0
            profs.append(np.maximum(prof, 0.05))
        u0 = from_samples(grid, np.stack(profs))
        model = make_skt_model(params, grid=grid, u0=u0)
        hist, est = continue_solution(model, horizon=1.0, dt=2e-3)
        worst = min(worst, est.min_state)
        if not (est.completed and est.min_state >= -1e-8):
            failures += 1
    return _result(
        "sign-preservation", 300.0, t0, failures == 0,
        {"failures": failures, "worst_min": worst},
    )


def criterion_9_lifetime():
    """Small data runs to T = 50 without norm growth; oversized data exits
    cleanly with finite reports."""
    t0 = time.time()
    grid = TorusGrid(1, 64)
    params = SKTParams(d1=1.0, d2=1.0, a11=0.5, a12=0.5, a21=0.5, a22=0.5)
    small = make_skt_model(
        params, grid=grid,
        u0=skt_initial_data(grid, base=(1e-2, 1e-2), amplitude=2e-3),
    )
    hist, est = continue_solution(small, horizon=50.0, dt=5e-3)
    hs0 = float(hist.hs[0]) if hist is not None else float("nan")
    hs_max = float(hist.hs.max()) if hist is not None else float("nan")
    small_ok = (
        est.completed
        and hist is not None
        and np.isfinite(hist.hs).all()
        and hs_max <= 2.0 * hs0
    )

    big = make_skt_model(
        params, grid=grid,
        u0=skt_initial_data(grid, base=(100.0, 100.0), amplitude=10.0),
    )
    bhist, best = continue_solution(big, horizon=1.0, dt=1e-3,
                                    knobs=IterationKnobs(t_min=1e-4))
    big_ok = (
        not best.completed
        and best.reason == "horizon-collapse"
        and isinstance(best.error, DataTooLargeError)
        and (bhist is None or np.isfinite(bhist.hs).all())
    )
    ok = small_ok and big_ok
    return _result(
        "lifetime", 300.0, t0, ok,
        {"small_completed": est.completed, "hs_growth": hs_max / hs0,
         "big_reason": best.reason},
    )


def criterion_10_cone_admissibility():
    """Parabolicity holds on the cone box while the quoted symmetric-part
    determinant goes negative on a ray."""
    t0 = time.time()
    cone = verify_cone_petrovskii(
        SKTParams(d1=1.0, d2=1.0, a11=0.5, a12=0.5, a21=0.5, a22=0.5),
        box=10.0, density=101,
    )
    probe = SKTParams(d1=1.0, d2=1.0, a11=0.0, a12=1.0, a21=1.0, a22=0.0)
    ts = np.linspace(2.0, 10.0, 17)
    u_line = np.stack([ts, np.zeros_like(ts)])
    printed = symmetric_part_determinant(u_line, probe)
    gammas = np.array([gamma_at_state(probe, [t, 0.0]) for t in ts])
    ok = cone.ok and bool((printed < 0.0).all()) and bool((gammas > 0.0).all())
    return _result(
        "cone-admissibility", 10.0, t0, ok,
        {"cone_ok": cone.ok, "gamma_min_box": cone.gamma_min,
         "printed_max_on_ray": float(printed.max()),
         "gamma_min_on_ray": float(gammas.min())},
    )


CRITERIA = (
    criterion_1_decay_bounds,
    criterion_2_exact_propagation,
    criterion_3_energy_certificates,
    criterion_4_mean_bookkeeping,
    criterion_5_littlewood_paley,
    criterion_6_picard_contraction,
    criterion_7_stability,
    criterion_8_sign_preservation,
    criterion_9_lifetime,
    criterion_10_cone_admissibility,
)


def run_all(verbose=True):
    results = []
    for fn in CRITERIA:
        res = fn()
        results.append(res)
        if verbose:
            print(res.line(), flush=True)
    return results


if __name__ == "__main__":
    out = run_all(verbose=True)
    bad = [r.name for r in out if not r.passed]
    if bad:
        print("FAILED:", ", ".join(bad))
        raise SystemExit(1)
    print("all criteria passed")
