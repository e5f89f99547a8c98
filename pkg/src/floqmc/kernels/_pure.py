"""Pure-numpy fallback for the hot per-bond covariance kernels.

Same contracts as the compiled backend in ``_core.pyx``: covariance matrices
are C-contiguous float64, updated in place, and every function returns the
accumulated log-trace increment of the (unnormalized) two-sided update
rho -> T rho T with T = exp((tau*eta/2) * i c_a c_b) per bond.
"""

import numpy as np

BACKEND = "pure"


def apply_bond(G, a, b, eta, tau):
    """Two-sided single-bond update of G in place; returns d ln Tr."""
    t = np.tanh(0.5 * tau) * eta
    th = np.tanh(tau) * eta
    m = G[a, b]
    D = (1.0 + t * t) + 2.0 * t * m
    u = G[:, a].copy()
    v = G[:, b].copy()
    c = 2.0 * t / D
    G -= c * (np.outer(u, v) - np.outer(v, u))
    fac = (1.0 - t * t) / D
    G[:, a] = fac * u
    G[a, :] = -fac * u
    G[:, b] = fac * v
    G[b, :] = -fac * v
    G[a, b] = ((1.0 + t * t) * m + 2.0 * t) / D
    G[b, a] = -G[a, b]
    G[a, a] = 0.0
    G[b, b] = 0.0
    return np.log(np.cosh(tau)) + np.log1p(th * m)


def apply_slots(G, slot_a, slot_b, eta, tau, start, stop):
    """Apply slots [start, stop) in order; returns total d ln Tr."""
    dlnw = 0.0
    for k in range(start, stop):
        dlnw += apply_bond(G, slot_a[k], slot_b[k], eta[k], tau)
    return dlnw
