"""Independent reference computations used by the tests.

Nothing here imports the package under test: each oracle is an elementary
re-derivation (finite differences, symbolic algebra, brute-force index sums
or closed forms) against which the spectral code is compared.
"""
from __future__ import annotations

import itertools

import numpy as np
import sympy as sp

# Central 8th-order first-derivative weights for offsets 1..4.
FD8 = np.array([4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0])


def fd8_derivative(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Periodic 8th-order central difference along ``axis``."""
    out = np.zeros_like(values)
    for j, w in enumerate(FD8, start=1):
        out += w * (np.roll(values, -j, axis=axis) - np.roll(values, j, axis=axis))
    return out / h


def sound_speed_sq_symbolic(gamma: float, rho: float, rho_bar: float = 1.0) -> float:
    """``dp/d rho`` for ``p = rho^gamma`` with the density ``rho_bar e^rho_log``."""
    r = sp.symbols("r", positive=True)
    p = r ** sp.nsimplify(gamma)
    return float(sp.diff(p, r).subs(r, rho_bar * rho))


def inverse_metric_expansion(v, c2) -> np.ndarray:
    """``-(d_t + v.d) (x) (d_t + v.d) + c^2 sum_i d_i (x) d_i`` as a 4x4 matrix."""
    t = np.concatenate([[1.0], np.asarray(v, dtype=float)])
    out = -np.outer(t, t)
    out[1:, 1:] += c2 * np.eye(3)
    return out


def permutation_sign(p) -> int:
    p = list(p)
    sign = 1
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                sign = -sign
    return sign


def levi_civita(i: int, j: int, k: int) -> int:
    if len({i, j, k}) < 3:
        return 0
    return permutation_sign((i, j, k))


def brute_double_epsilon(a, b) -> np.ndarray:
    """``eps^{ijk} eps_{kmn} a^m b^n`` by explicit loops over all indices."""
    out = np.zeros((3, 3))
    for i, j, k, m, n in itertools.product(range(3), repeat=5):
        out[i, j] += levi_civita(i, j, k) * levi_civita(k, m, n) * a[m] * b[n]
    return out


def single_mode_hdot(k_abs: float, s: float, amplitude: float, length: float = 2 * np.pi) -> float:
    """``Hdot^s`` norm of ``A cos(k.x)`` with ``|k| = 2^j``: only shell j contributes, weight 1."""
    l2 = abs(amplitude) * np.sqrt(length ** 3 / 2.0)
    return k_abs ** s * l2


def constant_drift_ray(x0, theta, v0, c: float, t):
    """Ray of the constant acoustic metric with initial covector ``theta``.

    ``w = -c |theta|`` is constant and ``dx/dt = v0 - c^2 theta / w``.
    """
    theta = np.asarray(theta, dtype=float)
    vel = np.asarray(v0, dtype=float) + c * theta / np.linalg.norm(theta)
    return np.asarray(x0)[None] + np.asarray(t)[:, None] * vel[None]


def dalembert_standing_wave(x1, t):
    """``sin(x1) cos(t)`` solves ``-f_tt + f_11 = 0``."""
    return np.sin(x1) * np.cos(t)
