"""Physical estimators, analytic reference curves, and fits.

NetEnsemble estimators average over the outer chain alone (gauge-invariant
functions of the net field); Replica estimators combine the outer
configuration at u = +1 with inner-chain samples via f_s * g_u * f_su.
This split is normative for every observable below.
"""

from __future__ import annotations

import numpy as np

from .gaussian import negativity as _negativity
from .sampler import Estimator


# ---------------------------------------------------------------- analytic

def sin2t(t):
    return np.sin(2.0 * np.asarray(t))


def flux_cross_exact(t):
    """[<W> W_s] = tanh^6(tau) = sin(2t)^6."""
    return sin2t(t) ** 6


def parity_cross_exact(t):
    """[<parity> s_last] = tanh(tau) = sin(2t)."""
    return sin2t(t)


def su_ansatz(t, r):
    """Flux-entropy proxy ansatz (one bit at t=0, zero at the Clifford point)."""
    base = -np.log2((1.0 + sin2t(t) ** 12) / 2.0)
    return base ** ((r + 1) / 4.0)


def w2_ansatz(t, r):
    """[<W>^2] implied by the entropy ansatz."""
    return 2.0 * 2.0 ** (-su_ansatz(t, r)) - 1.0


def collapse_transform(w2, r):
    """Rescale measured [<W>^2] so every (r, t) falls on sin(2t)^12."""
    w2 = np.asarray(w2, dtype=float)
    s_u = -np.log2((1.0 + w2) / 2.0)
    return 2.0 * 2.0 ** (-(s_u ** (4.0 / (r + 1)))) - 1.0


# ---------------------------------------------------------------- estimators

def _window_slots(lattice, schedule):
    """Per-plaquette slot index arrays of the latest flux windows."""
    last = schedule.r - 1
    return [np.array(slots) for (n, pid, slots) in schedule.windows if n == last]


def flux_ea(lattice, schedule):
    """Replica: [<W>^2] -- inner product of u around each plaquette."""
    boundaries = [np.array(p.bonds) for p in lattice.plaquettes]

    def outer(ctx):
        return np.ones(len(boundaries))

    def inner(ctx):
        return np.array([np.prod(ctx.u[b]) for b in boundaries], dtype=float)

    return Estimator(name="flux_ea", kind="replica", outer=outer, inner=inner)


def flux_cross(lattice, schedule):
    """NetEnsemble: product of net signs over the latest flux windows."""
    windows = _window_slots(lattice, schedule)

    def outer(ctx):
        return float(np.mean([np.prod(ctx.net[w]) for w in windows]))

    return Estimator(name="flux_cross", kind="net", outer=outer)


def _final_round_bonds(lattice, schedule):
    """R bonds with their (a, b) and the slot of their final measurement."""
    sa_bonds = schedule.rounds[-1]
    out = []
    for b in sa_bonds:
        b = int(b)
        k = schedule.slot_index[(b, schedule.r)]
        out.append((b, int(lattice.bond_a[b]), int(lattice.bond_b[b]), k))
    return out


def parity_cross(lattice, schedule):
    """NetEnsemble: net(bond, last round) * Gamma_ab on final-round R bonds."""
    info = _final_round_bonds(lattice, schedule)

    def outer(ctx):
        return float(
            np.mean([ctx.net[k] * ctx.cov[a, b] for (_, a, b, k) in info])
        )

    return Estimator(name="parity_cross", kind="net", outer=outer)


def parity_ea(lattice, schedule, color=0):
    """Replica: [<parity>^2] on bonds of one color class."""
    bonds = [
        (int(b), int(lattice.bond_a[b]), int(lattice.bond_b[b]))
        for b in lattice.bonds_of_color[color]
    ]

    def outer(ctx):
        return np.array([ctx.cov[a, b] for (_, a, b) in bonds])

    def inner(ctx):
        return np.array([ctx.u[b] * ctx.cov[a, b] for (b, a, _b) in bonds])

    name = f"parity_ea_{'RGB'[color]}"
    return Estimator(name=name, kind="replica", outer=outer, inner=inner)


def energy(lattice, schedule):
    return Estimator(name="energy", kind="net", outer=lambda ctx: ctx.thermal.E)


def energy_sq(lattice, schedule):
    return Estimator(name="energy_sq", kind="net", outer=lambda ctx: ctx.thermal.E ** 2)


def wick_var(lattice, schedule):
    return Estimator(name="wick_var", kind="net", outer=lambda ctx: ctx.thermal.varE)


def entropy(lattice, schedule):
    """Majorana entropy S_c = beta (E - F), per sample."""
    return Estimator(name="entropy", kind="net", outer=lambda ctx: ctx.thermal.S_c)


def energy_replica(lattice, schedule):
    """Replica: [<E>^2] via E_s(outer) * E_su(inner)."""
    return Estimator(
        name="energy_replica",
        kind="replica",
        outer=lambda ctx: np.array([ctx.thermal.E]),
        inner=lambda ctx: np.array([ctx.thermal.E]),
    )


def energy_fluct(lattice, schedule):
    """Replica: gauge-space energy fluctuation [<E^2>] - [<E>^2].

    Written with a constant reference shift c (the energy of the all-plus
    trajectory) as <(E-c)^2>_u - (E_s - c) <E-c>_u per branch, which is exact
    for any constant and keeps every sample at the O(dE) scale instead of
    O(E); both terms are unbiased under the nested-measure identity because
    gauge-invariant first moments collapse to the net ensemble.
    """
    ref = {}

    def _c(ctx):
        if "c" not in ref:
            ev = ctx.evolver
            net1 = np.ones(ev.n_slots, dtype=np.int8)
            from .gaussian import thermal_quantities as _tq

            ref["c"] = _tq(ev.spectrum(net1)).E
        return ref["c"]

    def outer(ctx):
        c = _c(ctx)
        return np.array([2.0, 2.0 * (ctx.thermal.E - c)])

    def inner(ctx):
        d = ctx.thermal.E - _c(ctx)
        return np.array([d * d, -d])

    return Estimator(name="energy_fluct", kind="replica", outer=outer, inner=inner)


def negativity_average(lattice, schedule, cut):
    in_a = cut.in_a

    def outer(ctx):
        return _negativity(ctx.cov, in_a)

    return Estimator(name="negativity", kind="net", outer=outer)


def correlation(lattice, schedule):
    """NetEnsemble vector: mean |Gamma_ij| per minimum-image distance bin."""
    d = lattice.distance_matrix()
    iu = np.triu_indices(lattice.n_sites, k=1)
    dist = np.round(d[iu], 9)
    uniq = np.unique(dist)
    masks = [dist == dd for dd in uniq]
    names = tuple(f"corr_{dd:.6f}" for dd in uniq)

    def outer(ctx):
        vals = np.abs(ctx.cov[iu])
        return np.array([vals[m].mean() for m in masks])

    return Estimator(name="correlation", kind="net", outer=outer, names=names)


def u_linear(lattice, schedule):
    """Replica first moment of u (vanishes exactly); diagnostic estimator."""
    def outer(ctx):
        return np.ones(1)

    def inner(ctx):
        return np.array([float(np.mean(ctx.u))])

    return Estimator(name="u_linear", kind="replica", outer=outer, inner=inner)


STANDARD = {
    "flux_ea": flux_ea,
    "flux_cross": flux_cross,
    "parity_cross": parity_cross,
    "parity_ea_R": lambda lat, sch: parity_ea(lat, sch, 0),
    "parity_ea_G": lambda lat, sch: parity_ea(lat, sch, 1),
    "parity_ea_B": lambda lat, sch: parity_ea(lat, sch, 2),
    "energy": energy,
    "energy_sq": energy_sq,
    "wick_var": wick_var,
    "entropy": entropy,
    "energy_replica": energy_replica,
    "energy_fluct": energy_fluct,
    "correlation": correlation,
    "u_linear": u_linear,
}


def build_estimators(names, lattice, schedule, cut=None):
    out = []
    for name in names:
        if name == "negativity":
            if cut is None:
                raise ValueError("negativity estimator needs a cut")
            out.append(negativity_average(lattice, schedule, cut))
        elif name in STANDARD:
            out.append(STANDARD[name](lattice, schedule))
        else:
            raise ValueError(f"unknown estimator {name!r}")
    return out


def specific_heat(records, beta, n_sites):
    """C_v = beta^2/N ([<E^2>] - [<E><E_su>] + [<Wick var>]) from records.

    Uses the branch-paired gauge-fluctuation record when available (far
    smaller variance), else the separate energy_sq / energy_replica records.
    Returns (value, stderr) with independent-term error propagation.
    """
    wv = records["wick_var"]
    fac = beta * beta / n_sites
    if "energy_fluct" in records:
        ef = records["energy_fluct"]
        val = fac * (ef.mean + wv.mean)
        err = fac * np.sqrt(ef.stderr ** 2 + wv.stderr ** 2)
    else:
        e2 = records["energy_sq"]
        erep = records["energy_replica"]
        val = fac * (e2.mean - erep.mean + wv.mean)
        err = fac * np.sqrt(e2.stderr ** 2 + erep.stderr ** 2 + wv.stderr ** 2)
    return float(val), float(err)


# ---------------------------------------------------------------- fits

class FitError(ValueError):
    pass


def pseudo_threshold(ts, w2, stderr=None):
    """t where a monotone [<W>^2](t) crosses 1/2, by linear interpolation.

    Returns (t_c, sigma_tc); raises FitError when the curve never crosses.
    """
    ts = np.asarray(ts, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    order = np.argsort(ts)
    ts, w2 = ts[order], w2[order]
    se = np.zeros_like(w2) if stderr is None else np.asarray(stderr, float)[order]
    above = w2 >= 0.5
    crossings = np.flatnonzero(above[1:] != above[:-1])
    if len(crossings) == 0:
        raise FitError("curve never crosses 1/2")
    i = crossings[0]
    f = (0.5 - w2[i]) / (w2[i + 1] - w2[i])
    t_c = ts[i] + f * (ts[i + 1] - ts[i])
    slope = (w2[i + 1] - w2[i]) / (ts[i + 1] - ts[i])
    sig = np.hypot((1 - f) * se[i], f * se[i + 1]) / abs(slope)
    return float(t_c), float(sig)


def fit_z(Ls, s_per_site, stderr=None):
    """Fit S/N = exp(-a r / L^z) with r = L over >= 3 sizes.

    Linear least squares of ln(-ln(S/N)) = ln a + (1 - z) ln L; returns
    (z, a, cov) where cov is the 2x2 covariance of (z, ln a).
    """
    Ls = np.asarray(Ls, dtype=float)
    y = np.asarray(s_per_site, dtype=float)
    if len(Ls) < 3:
        raise FitError("need at least 3 sizes")
    if np.any(y <= 0) or np.any(y >= 1):
        raise FitError("entropy density must lie in (0, 1) for the log fit")
    g = np.log(-np.log(y))
    X = np.column_stack([np.log(Ls), np.ones_like(Ls)])
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)
        w = np.abs(1.0 / (se / (y * np.abs(np.log(y))) + 1e-30))
        Xw = X * w[:, None]
        gw = g * w
    else:
        Xw, gw = X, g
    coef, res, rank, sv = np.linalg.lstsq(Xw, gw, rcond=None)
    slope, intercept = coef
    z = 1.0 - slope
    a = float(np.exp(intercept))
    dof = max(len(Ls) - 2, 1)
    if len(Ls) > 2 and res.size:
        s2 = float(res[0]) / dof
    else:
        r = gw - Xw @ coef
        s2 = float(r @ r) / dof
    cov = s2 * np.linalg.inv(Xw.T @ Xw)
    return float(z), a, cov


def negativity_fit(Ls, neg, stderr=None):
    """Fit E = (c1 L + c2 L ln L) (ln 2)/3; returns (c1, c2, cov)."""
    Ls = np.asarray(Ls, dtype=float)
    y = np.asarray(neg, dtype=float)
    X = np.column_stack([Ls, Ls * np.log(Ls)]) * (np.log(2.0) / 3.0)
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)
        se = np.where(se > 0, se, np.max(se[se > 0]) if np.any(se > 0) else 1.0)
        Xw = X / se[:, None]
        yw = y / se
    else:
        Xw, yw = X, y
    coef, res, rank, sv = np.linalg.lstsq(Xw, yw, rcond=None)
    dof = max(len(Ls) - 2, 1)
    r = yw - Xw @ coef
    s2 = float(r @ r) / dof if len(Ls) > 2 else 1.0
    cov = np.linalg.inv(Xw.T @ Xw)
    if stderr is None:
        cov = cov * s2
    return float(coef[0]), float(coef[1]), cov
