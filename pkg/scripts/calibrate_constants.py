"""Calibrate the decay-constant scale factors frozen in parapet.petrovskii.

Two functionals are measured over randomized admissible families, for each
matrix size N:

  decay:   sup_t ||e^{-tB}|| / [ (1 + |||B|||/delta)^N e^{-delta t / 2} ]
  energy:  (X~^2 + delta Y~^2) / [ (||P0 V0||_s^2 + ||P0 F||_{Y,s-1}^2/delta)
                                    * (1 + |||B|||/delta)^N ]

where X~, Y~ are the sup and dissipation norms of the exact mean-free
solution of d/dt V + lam B V = F per mode.  The frozen table value is
1.25 * max(decay_max, energy_max); the decay part is analytically 2^-N
(attained at B = delta I, t = 0) and the energy part dominates.

Run:  python3 scripts/calibrate_constants.py [--samples 400] [--seed 20260819]
"""

import argparse
import sys

import numpy as np

sys.path.insert(0, "src")

from parapet.petrovskii import (  # noqa: E402
    calibrate_decay_scale,
    operator_norm,
    sample_admissible_matrix,
)

LAM_POOL = np.array([1.0, 2.0, 4.0, 9.0, 16.0, 36.0, 64.0, 144.0, 256.0,
                     576.0, 1024.0])


def _time_grid(delta, nt=320):
    head = np.geomspace(1e-4 / delta, 1.0 / delta, nt // 2)
    tail = np.linspace(1.0 / delta, 14.0 / delta, nt - nt // 2)
    return np.concatenate([[0.0], head, tail[1:]])


def _eig(b):
    mu, q = np.linalg.eig(b)
    qinv = np.linalg.inv(q)
    return mu, q, qinv


def _energy_value(b, delta, lams, c0, f0, omega, s, t):
    """Exact energy functional for modes lams with data c0 and forcing
    cos(omega t) f0 (constant forcing when omega = 0)."""
    nn = b.shape[0]
    mu, q, qinv = _eig(b)
    # coordinates in the eigenbasis, per mode
    c_hat = np.einsum("ij,mj->mi", qinv, c0)
    f_hat = np.einsum("ij,mj->mi", qinv, f0)
    g = lams[:, None] * mu[None, :]                      # (nl, nn)
    decay = np.exp(-g[:, :, None] * t[None, None, :])    # (nl, nn, nt)
    v_hat = c_hat[:, :, None] * decay
    if np.any(f_hat):
        if omega == 0.0:
            v_hat = v_hat + (f_hat / g)[:, :, None] * (1.0 - decay)
        else:
            giw = g + 1j * omega
            osc = np.exp(1j * omega * t)[None, None, :]
            v_hat = v_hat + (f_hat / giw)[:, :, None] * (osc - decay)
            v_hat = v_hat.real + 0j if np.isrealobj(c0) else v_hat
    v = np.einsum("ij,mjt->mit", q, v_hat)               # (nl, nn, nt)
    w_s = (1.0 + lams) ** s
    sq = np.sum(np.abs(v) ** 2, axis=1)                  # (nl, nt)
    x_sq = float(np.max(w_s @ sq))
    y_sq = float(np.trapezoid((lams * w_s) @ sq, t))
    lhs = x_sq + delta * y_sq
    data = float(np.sum(w_s * np.sum(np.abs(c0) ** 2, axis=1)))
    if np.any(f0):
        w_f = (1.0 + lams) ** (s - 1.0)
        mod = np.cos(omega * t) ** 2 if omega else np.ones_like(t)
        f_sq = float(np.sum(w_f * np.sum(np.abs(f0) ** 2, axis=1)))
        data += f_sq * float(np.trapezoid(mod, t)) / delta
    x = operator_norm(b) / delta
    return lhs / (data * (1.0 + x) ** nn)


def calibrate_energy_scale(nn, n_samples, seed, s=2.0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_info = None
    for k in range(n_samples):
        delta = float(np.exp(rng.uniform(np.log(0.1), np.log(2.0))))
        b = sample_admissible_matrix(rng, nn, delta)
        n_modes = 1 if k % 5 < 3 else 3
        lams = rng.choice(LAM_POOL, size=n_modes, replace=False)
        family = k % 3
        c0 = np.zeros((n_modes, nn), dtype=complex)
        f0 = np.zeros((n_modes, nn), dtype=complex)
        if family in (0, 2):
            c0 = rng.standard_normal((n_modes, nn)) + 1j * rng.standard_normal((n_modes, nn))
        if family in (1, 2):
            f0 = rng.standard_normal((n_modes, nn)) + 1j * rng.standard_normal((n_modes, nn))
        omega = 0.0 if k % 2 == 0 else float(rng.uniform(0.5, 20.0))
        t = _time_grid(delta)
        val = _energy_value(b, delta, lams, c0, f0, omega, s, t)
        if val > worst:
            worst = val
            worst_info = {"delta": delta, "x": operator_norm(b) / delta,
                          "family": family, "omega": omega, "modes": lams.tolist()}
    # adversarial scalar-type corner: B = delta I, single slow mode, data only
    for delta in (0.1, 0.5, 2.0):
        b = np.eye(nn) * delta
        c0 = np.ones((1, nn), dtype=complex)
        f0 = np.zeros((1, nn), dtype=complex)
        val = _energy_value(b, delta, np.array([1.0]), c0, f0, 0.0, s,
                            _time_grid(delta, nt=640))
        if val > worst:
            worst = val
            worst_info = {"delta": delta, "x": 1.0, "family": "identity",
                          "omega": 0.0, "modes": [1.0]}
    return worst, worst_info


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=400)
    ap.add_argument("--decay-samples", type=int, default=1500)
    ap.add_argument("--seed", type=int, default=20260819)
    args = ap.parse_args()

    print(f"{'N':>2} {'decay_max':>12} {'energy_max':>12} {'frozen a_N':>12}  worst case")
    table = {}
    for nn in range(1, 9):
        decay_max = calibrate_decay_scale(nn, n_samples=args.decay_samples,
                                          seed=args.seed)
        energy_max, info = calibrate_energy_scale(nn, args.samples,
                                                  args.seed + nn)
        a_n = 1.25 * max(decay_max, energy_max)
        table[nn] = a_n
        print(f"{nn:>2} {decay_max:>12.6f} {energy_max:>12.6f} {a_n:>12.6f}  {info}")
    print("\nDECAY_SCALE = {")
    for nn, a_n in table.items():
        print(f"    {nn}: {a_n:.4f},")
    print("}")


if __name__ == "__main__":
    main()
