"""Reaction-cross-diffusion model descriptions and structural checks.

A model bundles the diffusion matrix ``A(u)``, an optional reaction term
``R(u) = diag(u) rho(u)``, forcing, initial data, and the regularity index
used by the nonlinear solver.  The two-species competition model with
cross-diffusion is provided as the worked example; its matrix is affine in
the state, which makes the structural decompositions exact.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Optional

import numpy as np

from .fields import SpectralField, TorusGrid, from_samples, to_real_samples
from .petrovskii import spectral_abscissa

TOL_SIGN = 1e-8


# ---------------------------------------------------------------------------
# smooth retraction onto (a neighbourhood of) the nonnegative cone


def _bump(t):
    out = np.zeros_like(t, dtype=float)
    pos = t > 0.0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _bump_prime(t):
    out = np.zeros_like(t, dtype=float)
    pos = t > 0.0
    tp = t[pos]
    out[pos] = np.exp(-1.0 / tp) / tp**2
    return out


def smooth_transition(t):
    """C-infinity ramp: 0 for t <= 0, 1 for t >= 1, monotone between."""
    t = np.asarray(t, dtype=float)
    g0 = _bump(t)
    g1 = _bump(1.0 - t)
    return g0 / (g0 + g1 + (g0 + g1 == 0.0))


def smooth_transition_prime(t):
    t = np.asarray(t, dtype=float)
    g0 = _bump(t)
    g1 = _bump(1.0 - t)
    d0 = _bump_prime(t)
    d1 = _bump_prime(1.0 - t)
    den = (g0 + g1) ** 2
    den = den + (den == 0.0)
    return (d0 * g1 + g0 * d1) / den


def retraction(values, margin=0.05):
    """Smooth map h with h(v) = v for v >= 0 and h(v) = -margin/2 for v <= -margin.

    Values in (-margin, 0) blend between v and the plateau, so h stays within
    O(margin) of the identity everywhere and is exactly the identity on the
    cone.  Applied componentwise.
    """
    v = np.asarray(values, dtype=float)
    w = smooth_transition((v + margin) / margin)
    plateau = -0.5 * margin
    return w * v + (1.0 - w) * plateau


def retraction_prime(values, margin=0.05):
    """Componentwise derivative of :func:`retraction`."""
    v = np.asarray(values, dtype=float)
    t = (v + margin) / margin
    w = smooth_transition(t)
    dw = smooth_transition_prime(t) / margin
    plateau = -0.5 * margin
    return w + dw * (v - plateau)


# ---------------------------------------------------------------------------
# model description


@dataclasses.dataclass
class ModelSpec:
    """Quasilinear system description used by the iteration solver.

    ``matrix_fn`` maps stacked state samples (ncomp, *shape) to diffusion
    matrix samples (ncomp, ncomp, *shape).  ``rho_fn``, if present, gives the
    reaction density so that R(u) = diag(u) rho(u).  ``cone_only`` marks
    matrices that are only admissible for nonnegative states; such models are
    always evaluated through the smooth retraction.
    """

    ncomp: int
    matrix_fn: Callable[[np.ndarray], np.ndarray]
    rho_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    u0: Optional[SpectralField] = None
    forcing: object = None
    s: float = 2.0
    cone_only: bool = False
    retraction_margin: float = 0.05
    name: str = "model"

    def state_map(self, samples):
        """State samples as seen by the diffusion matrix."""
        if self.cone_only:
            return retraction(samples, self.retraction_margin)
        return np.asarray(samples, dtype=float)

    def matrix_samples(self, samples):
        return self.matrix_fn(self.state_map(samples))

    def matrix_at_state(self, state):
        """Pointwise diffusion matrix for a single state vector."""
        u = np.asarray(state, dtype=float).reshape(self.ncomp, 1)
        return np.asarray(self.matrix_samples(u))[:, :, 0]

    def reaction_samples(self, samples):
        """R(u) = diag(u) rho(u) at raw state samples; zero if no reaction."""
        samples = np.asarray(samples, dtype=float)
        if self.rho_fn is None:
            return np.zeros_like(samples)
        return samples * self.rho_fn(self.state_map(samples))

    def has_reaction(self):
        return self.rho_fn is not None

    def base_matrix(self):
        """A evaluated at the zero state (reference frozen matrix)."""
        return self.matrix_at_state(np.zeros(self.ncomp))


# ---------------------------------------------------------------------------
# two-species competition model with cross-diffusion


@dataclasses.dataclass(frozen=True)
class SKTParams:
    """Coefficients of the two-species cross-diffusion competition model."""

    d1: float = 1.0
    d2: float = 1.0
    a11: float = 0.5
    a12: float = 0.5
    a21: float = 0.5
    a22: float = 0.5
    r1: float = 0.0
    r2: float = 0.0
    s11: float = 0.0
    s12: float = 0.0
    s21: float = 0.0
    s22: float = 0.0


def skt_matrix(u, params):
    """Diffusion matrix of the cross-diffusion system at state samples u.

    u has shape (2, *spatial); the result has shape (2, 2, *spatial).
    """
    u = np.asarray(u, dtype=float)
    u1, u2 = u[0], u[1]
    p = params
    row0 = np.stack([p.d1 + 2.0 * p.a11 * u1 + p.a12 * u2, p.a12 * u1])
    row1 = np.stack([p.a21 * u2, p.d2 + p.a21 * u1 + 2.0 * p.a22 * u2])
    return np.stack([row0, row1])


def skt_split(u, params):
    """Decomposition A(u) = D(u) + diag(u) B with D diagonal, B constant.

    D(u) = diag(d1 + a12 u2, d2 + a21 u1) collects the terms without the
    diag(u) prefactor; B = [[2 a11, a12], [a21, 2 a22]].  The identity is
    exact because A is affine in u.
    """
    u = np.asarray(u, dtype=float)
    u1, u2 = u[0], u[1]
    p = params
    zero = np.zeros_like(u1)
    dd = np.stack([
        np.stack([p.d1 + p.a12 * u2, zero]),
        np.stack([zero, p.d2 + p.a21 * u1]),
    ])
    bb = np.array([[2.0 * p.a11, p.a12], [p.a21, 2.0 * p.a22]])
    return dd, bb


def skt_rho(u, params):
    """Reaction density: rho_i(u) = r_i - s_i1 u1 - s_i2 u2."""
    u = np.asarray(u, dtype=float)
    u1, u2 = u[0], u[1]
    p = params
    return np.stack([
        p.r1 - p.s11 * u1 - p.s12 * u2,
        p.r2 - p.s21 * u1 - p.s22 * u2,
    ])


def skt_reaction(u, params):
    """R(u) = diag(u) rho(u); vanishes on each axis where that species is 0."""
    u = np.asarray(u, dtype=float)
    return u * skt_rho(u, params)


def make_skt_model(params=None, grid=None, u0=None, forcing=None, s=2.0,
                   reaction=None, retraction_margin=0.05):
    """Assemble the cross-diffusion competition model as a ModelSpec.

    ``reaction=None`` enables the logistic competition term exactly when any
    of the reaction coefficients is nonzero.
    """
    p = params if params is not None else SKTParams()
    if reaction is None:
        reaction = any(abs(c) > 0.0 for c in
                       (p.r1, p.r2, p.s11, p.s12, p.s21, p.s22))
    if u0 is None and grid is not None:
        u0 = skt_initial_data(grid)
    rho = (lambda u: skt_rho(u, p)) if reaction else None
    return ModelSpec(
        ncomp=2,
        matrix_fn=lambda u: skt_matrix(u, p),
        rho_fn=rho,
        u0=u0,
        forcing=forcing,
        s=s,
        cone_only=True,
        retraction_margin=retraction_margin,
        name="skt",
    )


def skt_initial_data(grid, base=(1.0, 1.0), amplitude=0.1):
    """Positive reference initial data: base plus one low-mode oscillation.

    d=1: (base1 + amplitude cos x, base2 + amplitude sin x).
    d=2 uses cos x1 and sin x2 for the two components.
    """
    x = grid.coordinates(0)
    if grid.d == 1:
        u1 = base[0] + amplitude * np.cos(x)
        u2 = base[1] + amplitude * np.sin(x)
    else:
        y = grid.coordinates(1)
        u1 = base[0] + amplitude * np.cos(x)
        u2 = base[1] + amplitude * np.sin(y)
    return from_samples(grid, np.stack([u1, u2]))


# ---------------------------------------------------------------------------
# structural checks


@dataclasses.dataclass
class SignStructureReport:
    """Outcome of the sign-preservation structure check."""

    ok: bool
    alpha: float
    max_split_defect: float
    n_samples: int

    def to_dict(self):
        return {
            "ok": self.ok,
            "alpha": self.alpha,
            "max_split_defect": self.max_split_defect,
            "n_samples": self.n_samples,
        }


def verify_sign_preserving(params, samples=None, rng=None, n_samples=200,
                           box=10.0, tol=1e-12):
    """Check A(u) = D(u) + diag(u) B with diagonal positive D on the cone.

    Samples cone states, reconstructs A from the split, and reports the
    worst entrywise defect together with alpha = min_i inf D_ii(u).
    """
    p = params
    if samples is None:
        rng = np.random.default_rng(rng if rng is not None else 0)
        samples = rng.uniform(0.0, box, size=(n_samples, 2))
        samples[0] = 0.0  # include the cone vertex, where D is smallest
    samples = np.asarray(samples, dtype=float)
    u = samples.T
    a = skt_matrix(u, p)
    dd, bb = skt_split(u, p)
    recon = dd + u[:, None, :] * bb[:, :, None]
    defect = float(np.max(np.abs(a - recon))) if samples.size else 0.0
    diag = np.stack([dd[0, 0], dd[1, 1]])
    alpha = float(diag.min()) if samples.size else min(p.d1, p.d2)
    ok = defect <= tol and alpha > 0.0
    return SignStructureReport(ok=ok, alpha=alpha, max_split_defect=defect,
                               n_samples=int(samples.shape[0]))


@dataclasses.dataclass
class ConeReport:
    """Parabolicity of the diffusion matrix over a box in the cone."""

    ok: bool
    gamma_min: float
    det_min: float
    trace_min: float
    witness: tuple
    box: float
    density: int

    def to_dict(self):
        return {
            "ok": self.ok,
            "gamma_min": self.gamma_min,
            "det_min": self.det_min,
            "trace_min": self.trace_min,
            "witness_u1": self.witness[0],
            "witness_u2": self.witness[1],
            "box": self.box,
            "density": self.density,
        }


def verify_cone_petrovskii(params, box=10.0, density=101):
    """Scan [0, box]^2 and report min spectral abscissa, det, and trace of A."""
    grid1 = np.linspace(0.0, box, density)
    uu1, uu2 = np.meshgrid(grid1, grid1, indexing="ij")
    u = np.stack([uu1.ravel(), uu2.ravel()])
    a = skt_matrix(u, params)
    mats = np.moveaxis(a, -1, 0)
    eigs = np.linalg.eigvals(mats)
    gammas = eigs.real.min(axis=1)
    dets = np.linalg.det(mats)
    traces = np.trace(mats, axis1=1, axis2=2)
    imin = int(np.argmin(gammas))
    report = ConeReport(
        ok=bool(gammas[imin] > 0.0 and dets.min() > 0.0 and traces.min() > 0.0),
        gamma_min=float(gammas[imin]),
        det_min=float(dets.min()),
        trace_min=float(traces.min()),
        witness=(float(u[0, imin]), float(u[1, imin])),
        box=box,
        density=density,
    )
    return report


def symmetric_part_determinant(u, params):
    """Textbook symmetric-part quantity for the cross-diffusion matrix.

    Returns (d1 + 2 a11 u1 + a12 u2)(d2 + a21 u1 + 2 a22 u2)
    - (a12 u1 + a21 u2)^2, the form usually quoted when normal ellipticity
    of A is (incorrectly) reduced to definiteness of its symmetric part.
    """
    u = np.asarray(u, dtype=float)
    u1, u2 = u[0], u[1]
    p = params
    m11 = p.d1 + 2.0 * p.a11 * u1 + p.a12 * u2
    m22 = p.d2 + p.a21 * u1 + 2.0 * p.a22 * u2
    off = p.a12 * u1 + p.a21 * u2
    return m11 * m22 - off**2


def symmetric_part_det_literal(u, params):
    """det(A + A^T) at the given states (for comparison with the printed form)."""
    a = skt_matrix(np.asarray(u, dtype=float), params)
    sym = a + np.swapaxes(a, 0, 1)
    return sym[0, 0] * sym[1, 1] - sym[0, 1] * sym[1, 0]


def gamma_at_state(params, state):
    """Spectral abscissa margin of A at one cone state."""
    u = np.asarray(state, dtype=float).reshape(2, 1)
    return spectral_abscissa(skt_matrix(u, params)[:, :, 0])


def nonnegativity_check(field_or_samples, grid=None, tol=TOL_SIGN):
    """Componentwise minimum of the real samples, with a witness location.

    Returns a dict with the global minimum, the offending component, the
    lattice index, and whether the minimum clears -tol.
    """
    if isinstance(field_or_samples, SpectralField):
        samples = to_real_samples(field_or_samples)
    else:
        samples = np.asarray(field_or_samples, dtype=float)
    flat = samples.reshape(samples.shape[0], -1)
    per_comp = flat.min(axis=1)
    comp = int(np.argmin(per_comp))
    pos = int(np.argmin(flat[comp]))
    idx = np.unravel_index(pos, samples.shape[1:])
    return {
        "min_value": float(per_comp[comp]),
        "component": comp,
        "index": tuple(int(i) for i in idx),
        "per_component": [float(v) for v in per_comp],
        "ok": bool(per_comp[comp] >= -tol),
    }
