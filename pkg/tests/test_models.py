import numpy as np
import pytest

from parapet.fields import TorusGrid, sobolev_norm, to_real_samples
from parapet.models import (
    SKTParams,
    gamma_at_state,
    make_skt_model,
    nonnegativity_check,
    retraction,
    retraction_prime,
    skt_initial_data,
    skt_matrix,
    skt_reaction,
    skt_rho,
    skt_split,
    smooth_transition,
    smooth_transition_prime,
    symmetric_part_det_literal,
    symmetric_part_determinant,
    verify_cone_petrovskii,
    verify_sign_preserving,
)


def test_smooth_transition_endpoints_and_midpoint():
    t = np.array([-2.0, 0.0, 0.5, 1.0, 3.0])
    out = smooth_transition(t)
    assert out[0] == 0.0
    assert out[1] == 0.0
    assert out[2] == 0.5
    assert out[3] == 1.0
    assert out[4] == 1.0
    fine = smooth_transition(np.linspace(0.0, 1.0, 500))
    assert np.all(np.diff(fine) >= 0.0)


def test_smooth_transition_prime_supported_inside_unit_interval():
    outside = smooth_transition_prime(np.array([0.0, 1.0, -2.0, 3.0]))
    assert np.array_equal(outside, np.zeros(4))
    inside = smooth_transition_prime(np.linspace(0.05, 0.95, 50))
    assert np.all(inside > 0.0)


def test_retraction_identity_on_cone_bitwise():
    v = np.array([0.0, 1e-12, 0.3, 7.0, 1e4])
    assert np.array_equal(retraction(v), v)


def test_retraction_plateau_and_fixed_point():
    # everything at or below -margin maps to the plateau -margin/2
    assert np.array_equal(retraction(np.array([-0.05, -0.2, -9.0])),
                          np.full(3, -0.025))
    # the plateau value itself is a fixed point
    assert retraction(np.array([-0.025]))[0] == -0.025
    # inside the blend zone the map is only nearly idempotent; the second
    # application moves points by less than a tenth of the margin
    v = np.linspace(-0.3, 0.3, 1001)
    once = retraction(v)
    assert np.max(np.abs(retraction(once) - once)) < 0.002


def test_retraction_stays_near_identity():
    v = np.linspace(-1.0, 1.0, 2001)
    assert np.max(np.abs(retraction(v) - np.maximum(v, -0.05))) <= 0.05


def test_retraction_prime_matches_finite_differences():
    v = np.linspace(-0.1, 0.1, 2001)
    h = 1e-7
    fd = (retraction(v + h) - retraction(v - h)) / (2.0 * h)
    assert np.max(np.abs(fd - retraction_prime(v))) < 1e-9


def test_retraction_custom_margin():
    v = np.array([-0.2, -0.1, 0.5])
    out = retraction(v, margin=0.1)
    assert out[0] == -0.05
    assert out[1] == -0.05
    assert out[2] == 0.5


def test_skt_matrix_at_ones():
    a = skt_matrix(np.ones((2, 1)), SKTParams())[:, :, 0]
    assert np.array_equal(a, np.array([[2.5, 0.5], [0.5, 2.5]]))
    eigs = np.sort(np.linalg.eigvals(a).real)
    assert np.allclose(eigs, [2.0, 3.0], atol=1e-14)


def test_skt_split_reconstructs_matrix():
    rng = np.random.default_rng(3)
    u = rng.uniform(0.0, 10.0, size=(2, 64))
    p = SKTParams(d1=1.5, d2=0.7, a11=0.4, a12=0.9, a21=0.2, a22=1.1)
    dd, bb = skt_split(u, p)
    assert np.array_equal(bb, np.array([[0.8, 0.9], [0.2, 2.2]]))
    recon = dd + u[:, None, :] * bb[:, :, None]
    assert np.max(np.abs(skt_matrix(u, p) - recon)) <= 1e-12
    # off-diagonal of D is identically zero
    assert np.array_equal(dd[0, 1], np.zeros(64))
    assert np.array_equal(dd[1, 0], np.zeros(64))


def test_skt_rho_at_origin_is_growth_rates():
    p = SKTParams(r1=1.0, r2=0.8, s11=1.0, s12=0.4, s21=0.3, s22=1.0)
    rho = skt_rho(np.zeros((2, 1)), p)
    assert rho[0, 0] == 1.0
    assert rho[1, 0] == 0.8


def test_skt_reaction_vanishes_on_axes():
    p = SKTParams(r1=1.0, r2=0.8, s11=1.0, s12=0.4, s21=0.3, s22=1.0)
    u = np.array([[0.0, 2.0], [3.0, 0.0]])
    r = skt_reaction(u, p)
    assert r[0, 0] == 0.0
    assert r[1, 1] == 0.0
    # nonzero where the species is present
    assert r[1, 0] == 3.0 * (0.8 - 0.3 * 0.0 - 1.0 * 3.0)
    assert r[0, 1] == 2.0 * (1.0 - 1.0 * 2.0 - 0.4 * 0.0)


def test_make_skt_model_reaction_flag():
    assert not make_skt_model(SKTParams()).has_reaction()
    assert make_skt_model(SKTParams(r1=1.0)).has_reaction()
    assert make_skt_model(SKTParams(s12=0.4)).has_reaction()
    # explicit flag overrides the auto rule
    assert not make_skt_model(SKTParams(r1=1.0), reaction=False).has_reaction()
    assert make_skt_model(SKTParams(), reaction=True).has_reaction()


def test_make_skt_model_defaults():
    grid = TorusGrid(1, 32)
    model = make_skt_model(grid=grid)
    assert model.ncomp == 2
    assert model.cone_only
    assert model.s == 2.0
    assert np.array_equal(model.base_matrix(), np.eye(2))
    assert np.array_equal(model.matrix_at_state([1.0, 1.0]),
                          np.array([[2.5, 0.5], [0.5, 2.5]]))
    # default initial data comes from skt_initial_data on the given grid
    ref = skt_initial_data(grid)
    assert np.array_equal(model.u0.coeffs, ref.coeffs)


def test_cone_only_state_map_retracts_before_matrix():
    model = make_skt_model(SKTParams())
    direct = skt_matrix(np.array([[-0.025], [1.0]]), SKTParams())
    assert np.array_equal(model.matrix_at_state([-1.0, 1.0]),
                          direct[:, :, 0])


def test_skt_initial_data_profiles():
    grid = TorusGrid(1, 64)
    x = grid.coordinates(0)
    f = skt_initial_data(grid, base=(1.0, 2.0), amplitude=0.1)
    samples = to_real_samples(f)
    assert np.allclose(samples[0], 1.0 + 0.1 * np.cos(x), atol=1e-14)
    assert np.allclose(samples[1], 2.0 + 0.1 * np.sin(x), atol=1e-14)
    default = skt_initial_data(grid)
    assert abs(sobolev_norm(default, 2.0) - np.sqrt(2.04)) < 1e-13


def test_skt_initial_data_2d_uses_second_coordinate():
    grid = TorusGrid(2, 16)
    x = grid.coordinates(0)
    y = grid.coordinates(1)
    samples = to_real_samples(skt_initial_data(grid, amplitude=0.2))
    assert np.allclose(samples[0], 1.0 + 0.2 * np.cos(x), atol=1e-14)
    assert np.allclose(samples[1], 1.0 + 0.2 * np.sin(y), atol=1e-14)


def test_verify_sign_preserving_default_params():
    rep = verify_sign_preserving(SKTParams(), rng=5)
    assert rep.ok
    # the sample set includes the cone vertex, where D bottoms out at d1
    assert rep.alpha == 1.0
    assert rep.max_split_defect <= 1e-12
    assert rep.n_samples == 200
    d = rep.to_dict()
    assert d["ok"] and d["alpha"] == 1.0


def test_verify_sign_preserving_accepts_int_seed_and_explicit_samples():
    a = verify_sign_preserving(SKTParams(), rng=7)
    b = verify_sign_preserving(SKTParams(), rng=7)
    assert a.alpha == b.alpha and a.max_split_defect == b.max_split_defect
    explicit = verify_sign_preserving(
        SKTParams(d1=2.0, d2=3.0), samples=np.array([[0.0, 0.0]]))
    assert explicit.alpha == 2.0 and explicit.n_samples == 1


def test_verify_cone_petrovskii_default_params():
    rep = verify_cone_petrovskii(SKTParams(), box=10.0, density=41)
    assert rep.ok
    assert rep.gamma_min == 1.0
    assert rep.witness == (0.0, 0.0)
    assert abs(rep.det_min - 1.0) < 1e-14
    assert rep.trace_min == 2.0
    d = rep.to_dict()
    assert d["witness_u1"] == 0.0 and d["witness_u2"] == 0.0


def test_symmetric_part_probe_goes_negative_while_gamma_stays_positive():
    # pure cross-diffusion: the matrix is triangular along u = (t, 0), so its
    # spectrum stays at {1, 1 + t}, yet both symmetric-part quantities cross 0
    p = SKTParams(d1=1.0, d2=1.0, a11=0.0, a12=1.0, a21=1.0, a22=0.0)
    ts = np.array([0.0, 1.0, 2.0, 3.0, 5.0])
    u = np.stack([ts, np.zeros_like(ts)])
    printed = symmetric_part_determinant(u, p)
    assert np.array_equal(printed, np.array([1.0, 1.0, -1.0, -5.0, -19.0]))
    literal = symmetric_part_det_literal(u, p)
    assert np.array_equal(literal, np.array([4.0, 7.0, 8.0, 7.0, -1.0]))
    for t in ts:
        assert gamma_at_state(p, (t, 0.0)) == pytest.approx(1.0, abs=1e-13)


def test_nonnegativity_check_reports_witness():
    grid = TorusGrid(1, 8)
    samples = np.ones((2, 8))
    samples[1, 3] = -0.2
    out = nonnegativity_check(samples)
    assert not out["ok"]
    assert out["min_value"] == -0.2
    assert out["component"] == 1
    assert out["index"] == (3,)
    assert out["per_component"] == [1.0, -0.2]
    ok = nonnegativity_check(skt_initial_data(grid))
    assert ok["ok"] and ok["min_value"] > 0.8


def test_nonnegativity_check_tolerance():
    samples = np.full((1, 4), -1e-9)
    assert nonnegativity_check(samples)["ok"]
    assert not nonnegativity_check(samples, tol=1e-10)["ok"]


def test_reaction_samples_zero_without_rho():
    model = make_skt_model(SKTParams())
    u = np.ones((2, 16))
    assert np.array_equal(model.reaction_samples(u), np.zeros((2, 16)))
