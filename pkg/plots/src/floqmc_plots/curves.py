"""Closed-form reference curves overlaid on the data panels.

These re-evaluate the analytic expressions locally; they must agree with the
simulator's own values at every grid point (checked in the test suite).
"""

import numpy as np


def sin2t(t):
    """t in radians."""
    return np.sin(2.0 * np.asarray(t, dtype=float))


def flux_cross(t):
    return sin2t(t) ** 6


def parity_cross(t):
    return sin2t(t)


def collapse_target(t):
    return sin2t(t) ** 12


def su_ansatz(t, r):
    base = -np.log2((1.0 + sin2t(t) ** 12) / 2.0)
    return base ** ((r + 1) / 4.0)


def w2_ansatz(t, r):
    return 2.0 * 2.0 ** (-su_ansatz(t, r)) - 1.0


def collapse_transform(w2, r):
    w2 = np.asarray(w2, dtype=float)
    s_u = -np.log2((1.0 + w2) / 2.0)
    return 2.0 * 2.0 ** (-(s_u ** (4.0 / (r + 1)))) - 1.0


def lcrossing(w2_ansatz_curve_t, r):
    """t where the ansatz crosses 1/2 (bisection on the closed form)."""
    lo, hi = 1e-4, np.pi / 4 - 1e-9
    f = lambda t: w2_ansatz(t, r) - 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
