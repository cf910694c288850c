import numpy as np
import pytest

from parapet.errors import UsageError
from parapet.fields import (
    SpectralField,
    TorusGrid,
    apply_divergence_form,
    build_history,
    dealias,
    dealias_samples,
    derivative_coeffs,
    difference_energy_norms,
    energy_norms,
    from_samples,
    grad_sobolev_sq,
    l2_norm,
    matvec_samples,
    mean,
    project_mean_free,
    sobolev_norm,
    to_real_samples,
    to_samples,
    zero_field,
)


def test_grid_rejects_bad_sizes():
    with pytest.raises(UsageError):
        TorusGrid(1, 48)  # not a power of two
    with pytest.raises(UsageError):
        TorusGrid(3, 32)  # only d = 1, 2


def test_wavenumber_layout_matches_fft():
    grid = TorusGrid(1, 16)
    np.testing.assert_array_equal(
        grid.wavenumbers(0), np.fft.fftfreq(16, 1.0 / 16)
    )
    g2 = TorusGrid(2, 8)
    k0 = g2.wavenumbers(0)
    k1 = g2.wavenumbers(1)
    np.testing.assert_allclose(g2.ksq, k0**2 + k1**2)


def test_sample_roundtrip_is_exact():
    rng = np.random.default_rng(0)
    for d, n in ((1, 32), (2, 16)):
        grid = TorusGrid(d, n)
        u = rng.standard_normal((3,) + grid.shape)
        f = from_samples(grid, u)
        np.testing.assert_allclose(to_real_samples(f), u, atol=1e-13)


def test_single_component_samples_are_promoted():
    grid = TorusGrid(1, 16)
    f = from_samples(grid, np.cos(grid.coordinates(0)))
    assert f.ncomp == 1


def test_cosine_coefficients():
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    f = from_samples(grid, 2.0 + np.cos(x))
    c = f.coeffs[0]
    assert abs(c[0] - 2.0) < 1e-14
    assert abs(c[1] - 0.5) < 1e-14
    assert abs(c[-1] - 0.5) < 1e-14
    assert np.abs(np.delete(c, [0, 1, 31])).max() < 1e-14


def test_mean_and_projection():
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    f = from_samples(grid, np.stack([1.5 + np.sin(x), -0.5 + np.cos(2 * x)]))
    np.testing.assert_allclose(mean(f).real, [1.5, -0.5], atol=1e-14)
    g = project_mean_free(f)
    np.testing.assert_allclose(mean(g), [0.0, 0.0], atol=0.0)


def test_sobolev_norm_closed_form():
    # a + b cos x: ||.||_{H^s}^2 = a^2 + 2 (1+1)^s (b/2)^2
    grid = TorusGrid(1, 64)
    x = grid.coordinates(0)
    a, b = 1.0, 0.1
    f = from_samples(grid, a + b * np.cos(x))
    for s in (0.0, 1.0, 2.0, 2.5):
        expect = np.sqrt(a**2 + 2.0 * 2.0**s * (b / 2.0) ** 2)
        assert abs(sobolev_norm(f, s) - expect) < 1e-14
    assert abs(sobolev_norm(f, 2.0) - np.sqrt(1.02)) < 1e-14


def test_homogeneous_norm_drops_mean():
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    f = from_samples(grid, 5.0 + np.sin(x))
    g = from_samples(grid, np.sin(x))
    assert abs(sobolev_norm(f, 1.0, homogeneous=True)
               - sobolev_norm(g, 1.0, homogeneous=True)) < 1e-14


def test_grad_sobolev_sq_closed_form():
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    f = from_samples(grid, np.cos(3 * x))
    # coefficients 0.5 at k = +-3: sum |k|^2 (1+|k|^2)^s |c|^2
    expect = 2 * 9.0 * 10.0**2 * 0.25
    assert abs(grad_sobolev_sq(f, 2.0) - expect) < 1e-11


def test_derivative_coeffs():
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    f = from_samples(grid, np.cos(2 * x))
    df = SpectralField(grid, derivative_coeffs(f, 0))
    np.testing.assert_allclose(to_real_samples(df)[0], -2.0 * np.sin(2 * x),
                               atol=1e-12)


def test_dealias_kills_top_third():
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    f = from_samples(grid, np.cos(12 * x) + np.cos(2 * x))
    g = dealias(f)
    assert abs(g.coeffs[0, 12]) == 0.0
    assert abs(g.coeffs[0, 2] - 0.5) < 1e-14


def test_dealias_samples_matches_field_path():
    rng = np.random.default_rng(1)
    grid = TorusGrid(2, 16)
    u = rng.standard_normal((2,) + grid.shape)
    via_field = to_real_samples(dealias(from_samples(grid, u)))
    via_samples = dealias_samples(grid, u)
    np.testing.assert_allclose(via_field, via_samples, atol=1e-13)


def test_matvec_samples_explicit():
    m = np.zeros((2, 2, 4))
    m[0, 0] = 1.0
    m[0, 1] = 2.0
    m[1, 1] = 3.0
    v = np.stack([np.arange(4.0), np.ones(4)])
    out = matvec_samples(m, v)
    np.testing.assert_allclose(out[0], v[0] + 2.0)
    np.testing.assert_allclose(out[1], 3.0 * np.ones(4))


def test_divergence_form_constant_matrix_is_weighted_laplacian():
    # constant M: div(M grad u) has coefficients -|k|^2 M c_k on the 2/3 ball
    grid = TorusGrid(1, 64)
    x = grid.coordinates(0)
    f = from_samples(grid, np.stack([np.cos(3 * x), np.sin(5 * x)]))
    m = np.zeros((2, 2) + grid.shape)
    b = np.array([[1.5, 0.25], [0.0, 2.0]])
    m[...] = b[:, :, None]
    out = apply_divergence_form(m, f)
    lam = grid.ksq
    expect = -lam * np.einsum("ij,j...->i...", b, f.coeffs)
    np.testing.assert_allclose(out.coeffs, expect * grid.dealias_mask,
                               atol=1e-12)


def test_divergence_form_zero_mean():
    rng = np.random.default_rng(2)
    grid = TorusGrid(2, 16)
    f = from_samples(grid, rng.standard_normal((2,) + grid.shape))
    m = dealias_samples(grid, rng.standard_normal((2, 2) + grid.shape))
    out = apply_divergence_form(m, f)
    assert np.abs(mean(out)).max() < 1e-15


def test_field_arithmetic():
    grid = TorusGrid(1, 16)
    f = from_samples(grid, np.ones((1, 16)))
    g = from_samples(grid, 2.0 * np.ones((1, 16)))
    assert abs(mean(f + g)[0].real - 3.0) < 1e-14
    assert abs(mean(g - f)[0].real - 1.0) < 1e-14
    assert abs(mean(2.0 * f)[0].real - 2.0) < 1e-14
    assert zero_field(grid, 2).ncomp == 2


def test_history_traces_match_norms():
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    states = [from_samples(grid, np.stack([np.exp(-t) * np.cos(x),
                                           0.5 * np.ones_like(x)])).coeffs
              for t in (0.0, 0.1, 0.2)]
    h = build_history(grid, 2.0, [0.0, 0.1, 0.2], states)
    for i in range(3):
        assert abs(h.hs[i] - sobolev_norm(h.state(i), 2.0)) < 1e-14
        assert abs(h.grad_sq[i] - grad_sobolev_sq(h.state(i), 2.0)) < 1e-14
    np.testing.assert_allclose(h.means[:, 1].real, 0.5, atol=1e-14)


def test_history_interpolation_and_endpoints():
    grid = TorusGrid(1, 16)
    c0 = from_samples(grid, np.zeros((1, 16))).coeffs
    c1 = from_samples(grid, np.ones((1, 16))).coeffs
    h = build_history(grid, 2.0, [0.0, 1.0], [c0, c1])
    assert abs(mean(h.state_at(0.5))[0].real - 0.5) < 1e-14
    assert abs(mean(h.state_at(-1.0))[0].real) == 0.0
    assert abs(mean(h.state_at(2.0))[0].real - 1.0) < 1e-14
    np.testing.assert_array_equal(h.initial_field().coeffs, c0)
    np.testing.assert_array_equal(h.final_field().coeffs, c1)


def test_energy_norms_single_decaying_mode():
    # u(t) = e^{-t} cos x: X = ||u(0)||, Y^2 = int |k|^2(1+|k|^2)^s |c|^2 dt
    grid = TorusGrid(1, 32)
    x = grid.coordinates(0)
    times = np.linspace(0.0, 2.0, 2001)
    states = [from_samples(grid, (np.exp(-t) * np.cos(x))[None]).coeffs
              for t in times]
    h = build_history(grid, 2.0, times, states)
    xn, yn, en = energy_norms(h)
    hs0 = np.sqrt(2.0 * 4.0 * 0.25)
    ysq = 2 * 1.0 * 4.0 * 0.25 * (1.0 - np.exp(-4.0)) / 2.0
    assert abs(xn - hs0) < 1e-12
    assert abs(yn - np.sqrt(ysq)) < 1e-4  # trapezoid error in time
    assert abs(en - np.sqrt(xn**2 + yn**2)) < 1e-12


def test_difference_energy_norms_rejects_grid_mismatch():
    g1 = TorusGrid(1, 16)
    g2 = TorusGrid(1, 32)
    c1 = from_samples(g1, np.ones((1, 16))).coeffs
    c2 = from_samples(g2, np.ones((1, 32))).coeffs
    h1 = build_history(g1, 2.0, [0.0, 1.0], [c1, c1])
    h2 = build_history(g2, 2.0, [0.0, 1.0], [c2, c2])
    with pytest.raises(UsageError):
        difference_energy_norms(h1, h2, 2.0)


def test_l2_norm_parseval():
    rng = np.random.default_rng(3)
    grid = TorusGrid(1, 64)
    u = rng.standard_normal((1, 64))
    f = from_samples(grid, u)
    # Plancherel with the 1/size transform: sum |c_k|^2 = mean |u|^2
    assert abs(l2_norm(f) - np.sqrt(np.mean(u**2))) < 1e-12
