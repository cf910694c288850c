import dataclasses

import numpy as np
import pytest

from parapet.errors import BlowUpError, DataTooLargeError, UsageError
from parapet.fields import TorusGrid, from_samples
from parapet.linear import LinearProblem, solve_constant
from parapet.models import SKTParams, make_skt_model, skt_initial_data
from parapet.nonlinear import (
    IterationKnobs,
    _zero_history,
    continue_solution,
    discretization_residual_scale,
    picard_step,
    reference_profile,
    residual,
    solve_local,
    stability_check,
)


def _grid():
    return TorusGrid(1, 64)


def test_reference_profile_is_frozen_base_solve():
    # the default model's diffusion matrix at the zero state is the identity,
    # so the reference profile must agree bitwise with the constant solver
    model = make_skt_model(grid=_grid())
    ref = reference_profile(model, 0.25, 1e-3)
    prob = LinearProblem(u0=model.u0, t_final=0.25, dt=1e-3, snapshot_stride=1)
    const = solve_constant(np.eye(2), prob, 2.0)
    assert np.array_equal(ref.states, const.states)
    assert np.array_equal(ref.times, const.times)


def test_reference_profile_is_step_at_zero_iterate():
    model = make_skt_model(grid=_grid())
    ref = reference_profile(model, 0.25, 1e-3)
    step = picard_step(model, _zero_history(model, 0.25, 1e-3, 2.0))
    assert np.array_equal(ref.states, step.states)


def test_picard_step_requires_initial_data_and_two_nodes():
    model = make_skt_model(grid=_grid())
    hist = _zero_history(model, 0.25, 1e-3, 2.0)
    bare = dataclasses.replace(model, u0=None)
    with pytest.raises(UsageError):
        picard_step(bare, hist)
    one_node = dataclasses.replace(hist, times=hist.times[:1],
                                   states=hist.states[:1])
    with pytest.raises(UsageError):
        picard_step(model, one_node)


def test_solve_local_report_on_default_model():
    model = make_skt_model(grid=_grid())
    hist, rep = solve_local(model, 1.0, 1e-3)
    # horizon halves 1.0 -> 0.5 -> 0.25 before the reference is small enough
    assert rep.t_local == 0.25
    assert rep.horizon_halvings == 2
    assert rep.dt_restarts == 0
    assert abs(rep.d_norm - np.sqrt(2.04)) < 1e-13
    assert rep.threshold == 0.25 / (1.0 + rep.d_norm)
    assert rep.y_free <= rep.threshold
    assert rep.converged
    assert rep.iterations_to_tol == 5
    assert rep.iterations <= 10
    # contraction: every successive distance ratio is well below one
    assert max(rep.ratios) < 0.05
    assert rep.ball_ok
    assert rep.final_distance <= 1e-9
    d = rep.to_dict()
    assert d["converged"] and d["t_local"] == 0.25
    assert hist.meta["picard_converged"]
    assert hist.meta["t_local"] == 0.25
    assert hist.times[-1] == 0.25


def test_solve_local_unforced_means_are_bitwise_constant():
    model = make_skt_model(grid=_grid())
    hist, _ = solve_local(model, 0.25, 1e-3)
    assert np.array_equal(hist.means,
                          np.broadcast_to(hist.means[0], hist.means.shape))
    assert not np.any(hist.forcing_mean_integral)


def test_solve_local_reaction_mean_ledger():
    p = SKTParams(r1=1.0, r2=0.8, s11=1.0, s12=0.4, s21=0.3, s22=1.0)
    model = make_skt_model(p, grid=_grid())
    hist, rep = solve_local(model, 0.25, 1e-3)
    assert rep.converged
    # the reaction feeds the mean ledger, and the ledger accounts for the
    # whole drift of the spatial mean
    assert np.any(np.abs(hist.forcing_mean_integral[-1]) > 1e-3)
    drift = hist.means[-1] - hist.means[0] - hist.forcing_mean_integral[-1]
    assert np.max(np.abs(drift)) <= 1e-10


def test_residual_within_discretization_scale():
    model = make_skt_model(grid=_grid())
    hist, _ = solve_local(model, 0.25, 1e-3)
    r = residual(model, hist)
    scale = discretization_residual_scale(model, hist)
    assert 0.0 < r <= 10.0 * scale


def test_continuation_chains_segments_to_horizon():
    model = make_skt_model(grid=_grid())
    hist, est = continue_solution(model, 0.6, 1e-3)
    assert est.completed
    assert est.reason == "horizon"
    assert not est.blown_up
    assert est.n_segments == 2
    assert est.t_reached == pytest.approx(0.6, abs=1e-12)
    # concatenated history is one contiguous, strictly increasing time grid
    assert hist.times[0] == 0.0
    assert hist.times[-1] == pytest.approx(0.6, abs=1e-12)
    assert np.all(np.diff(hist.times) > 0.0)
    assert hist.meta["solver"] == "continuation"
    assert hist.meta["n_segments"] == 2
    # segment records chain without gaps
    for prev, nxt in zip(est.segments, est.segments[1:]):
        assert nxt["t0"] == pytest.approx(prev["t1"], abs=1e-12)
    assert est.final_hs == float(hist.hs[-1])
    assert est.sign_ok and est.min_state > 0.0
    assert est.to_dict()["reason"] == "horizon"


def test_solve_local_blowup_threshold():
    # a threshold at the initial norm is crossed by the very first iterate
    model = make_skt_model(grid=_grid())
    knobs = IterationKnobs(blowup_factor=1.0)
    with pytest.raises(BlowUpError) as exc:
        solve_local(model, 0.25, 1e-3, knobs=knobs)
    assert exc.value.exit_code == 3
    assert exc.value.time == 0.0
    assert exc.value.norm == exc.value.threshold


def test_continuation_records_blowup():
    model = make_skt_model(grid=_grid())
    hist, est = continue_solution(model, 1.0, 1e-3,
                                  knobs=IterationKnobs(blowup_factor=1.0))
    assert hist is None
    assert not est.completed
    assert est.reason == "blow-up"
    assert est.blown_up
    assert isinstance(est.error, BlowUpError)
    assert np.isnan(est.final_hs) and np.isnan(est.min_state)


def test_large_data_collapses_horizon():
    grid = _grid()
    big = make_skt_model(
        grid=grid,
        u0=skt_initial_data(grid, base=(100.0, 100.0), amplitude=10.0),
    )
    knobs = IterationKnobs(t_min=1e-4)
    with pytest.raises(DataTooLargeError) as exc:
        solve_local(big, 1.0, 1e-3, knobs=knobs)
    assert exc.value.exit_code == 5
    assert exc.value.horizon < 1e-4
    hist, est = continue_solution(big, 1.0, 1e-3, knobs=knobs)
    assert hist is None
    assert est.reason == "horizon-collapse"
    assert isinstance(est.error, DataTooLargeError)


def test_continuation_rejects_bad_horizon():
    model = make_skt_model(grid=_grid())
    with pytest.raises(UsageError):
        continue_solution(model, 0.0, 1e-3)


def test_stability_check_nearby_data():
    grid = _grid()
    x = grid.coordinates(0)
    model_a = make_skt_model(grid=grid)
    eps = 1e-3
    du = from_samples(grid, np.stack([eps * np.cos(2 * x),
                                      -eps * np.sin(x)]))
    model_b = dataclasses.replace(model_a, u0=model_a.u0 + du)
    out = stability_check(model_a, model_b, 0.25, 2e-3)
    assert out["t_common"] == 0.25
    assert out["dt"] == 2e-3
    assert out["d_diff"] > 0.0
    assert out["ratio"] == out["e_diff"] / out["d_diff"]
    # the data-to-solution map is Lipschitz with a modest constant here
    assert 0.1 < out["ratio"] < 10.0


def test_stability_check_requires_distinct_data():
    model = make_skt_model(grid=_grid())
    with pytest.raises(UsageError):
        stability_check(model, dataclasses.replace(model), 0.25, 2e-3)
