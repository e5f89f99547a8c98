"""Finite-temperature Kekule-frame Kitaev Hamiltonian comparison.

H = sum_R ZZ + sum_G YY + sum_B XX maps to free Majoranas hopping on the
honeycomb under the static gauge field u, with a sign-free thermal ensemble
over u. L=3 is summed exactly over all flux patterns and Wilson-loop classes
(one gauge representative each); larger L uses Metropolis sampling of u.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .gaussian import negativity as _negativity
from .lattice import bipartition
from .sampler import SamplerError, binned


class KitaevError(ValueError):
    pass


def _wrap_sign(lattice, bond_id, boundary):
    """-1 on bonds winding around the torus for antiperiodic fermions."""
    if boundary == "periodic":
        return 1.0
    if boundary != "antiperiodic":
        raise KitaevError(f"unknown boundary {boundary!r}")
    L = lattice.L
    cell, d = divmod(bond_id, 3)
    m, n = divmod(cell, L)
    if d == 1 and m == L - 1:  # B(m,n) - A(m+1,n) wraps in a1
        return -1.0
    if d == 2 and n == L - 1:  # B(m,n) - A(m,n+1) wraps in a2
        return -1.0
    return 1.0


def quadratic_hamiltonian(lattice, u, boundary="antiperiodic"):
    """Real antisymmetric single-particle matrix A with H = (i/4) c A c.

    A[a, b] = 2 u_ab on each bond (A sublattice row), so the mode energies
    are the eigenvalues of iA and the fermion band reaches 6 |J| = 6.
    """
    n = lattice.n_sites
    A = np.zeros((n, n))
    for b in range(lattice.n_bonds):
        i, j = lattice.bond_a[b], lattice.bond_b[b]
        val = 2.0 * u[b] * _wrap_sign(lattice, b, boundary)
        A[i, j] += val
        A[j, i] -= val
    return A


def mode_energies(A):
    """Non-negative single-mode energies (eigenvalues of iA, upper branch)."""
    w = np.linalg.eigvalsh(1j * A)
    return w[len(w) // 2:]


def sector_thermal(a, beta):
    """(lnZ, E, wick var) for mode energies a at inverse temperature beta."""
    x = 0.5 * beta * a
    lnz = float(np.sum(np.abs(x) + np.log1p(np.exp(-2.0 * np.abs(x)))))
    th = np.tanh(x)
    E = float(-0.5 * np.sum(a * th))
    var = float(0.25 * np.sum(a * a * (1.0 - th * th)))
    return lnz, E, var


def thermal_covariance(A, beta):
    """Majorana covariance of exp(-beta H), H = (i/4) c A c."""
    w, V = np.linalg.eigh(1j * np.asarray(A, dtype=complex))
    G = (V * np.tanh(-0.5 * beta * w)) @ V.conj().T
    G = (-1j * G).real
    return 0.5 * (G - G.T)


def plaquette_flux(lattice, u):
    """prod of u around each hexagon."""
    return np.array([np.prod(u[list(p.bonds)]) for p in lattice.plaquettes])


def _dual_path_bonds(lattice, p_from, p_to):
    """Bonds whose flips toggle exactly the fluxes of p_from and p_to."""
    shared = {}
    adj = {p.id: [] for p in lattice.plaquettes}
    bond_plaqs = {}
    for p in lattice.plaquettes:
        for b in p.bonds:
            bond_plaqs.setdefault(b, []).append(p.id)
    for b, ps in bond_plaqs.items():
        if len(ps) == 2:
            adj[ps[0]].append((ps[1], b))
            adj[ps[1]].append((ps[0], b))
    # BFS
    prev = {p_from: (None, None)}
    queue = [p_from]
    while queue:
        cur = queue.pop(0)
        if cur == p_to:
            break
        for nxt, b in adj[cur]:
            if nxt not in prev:
                prev[nxt] = (cur, b)
                queue.append(nxt)
    bonds = []
    cur = p_to
    while prev[cur][0] is not None:
        cur, b = prev[cur]
        bonds.append(b)
    return bonds


def flux_representative(lattice, target_flux):
    """One u with the requested flux pattern (product over all must be +1)."""
    target = np.asarray(target_flux)
    if np.prod(target) != 1:
        raise KitaevError("flux pattern violates the torus parity constraint")
    u = np.ones(lattice.n_bonds, dtype=np.int8)
    bad = [p.id for p in lattice.plaquettes if target[p.id] == -1]
    for p, q in zip(bad[0::2], bad[1::2]):
        for b in _dual_path_bonds(lattice, p, q):
            u[b] = -u[b]
    if not np.array_equal(plaquette_flux(lattice, u), target):
        raise KitaevError("representative construction failed")
    return u


def wilson_lines(lattice):
    """Two bond sets whose flips twist the boundary without moving any flux."""
    L = lattice.L
    line1 = [lattice.bond_id(m, 0, 2) for m in range(L)]  # crosses a2 direction
    line2 = [lattice.bond_id(0, n, 1) for n in range(L)]  # crosses a1 direction
    return line1, line2


@dataclass
class FluxSectorResult:
    beta: float
    energy: float  # per site
    cv: float  # per site
    flux: float
    neg: float
    energy_err: float = 0.0
    cv_err: float = 0.0
    flux_err: float = 0.0
    neg_err: float = 0.0


def _observables_for_u(lattice, u, betas, cut, boundary):
    A = quadratic_hamiltonian(lattice, u, boundary)
    a = mode_energies(A)
    w = float(np.mean(plaquette_flux(lattice, u)))
    rows = []
    for beta in betas:
        lnz, E, var = sector_thermal(a, beta)
        neg = _negativity(thermal_covariance(A, beta), cut.in_a)
        rows.append((lnz, E, var, w, neg))
    return rows


def exact_flux_sum(lattice, betas, boundary="antiperiodic", cut=None):
    """Exact thermal averages at L=3 over all 2^{L^2 - 1} flux patterns.

    One deterministic gauge representative per pattern; the fermion boundary
    class is pinned to the antiperiodic choice (lowest energy at finite
    size), matching the flux-pattern Monte Carlo below.
    """
    if lattice.L != 3:
        raise KitaevError("exact summation is intended for L = 3")
    if cut is None:
        cut = bipartition(lattice)
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    n_p = lattice.n_plaquettes
    sector_rows = []
    for flips in _even_subsets(n_p):
        target = np.ones(n_p, dtype=int)
        target[list(flips)] = -1
        u = flux_representative(lattice, target)
        sector_rows.append(_observables_for_u(lattice, u, betas, cut, boundary))
    out = []
    n = lattice.n_sites
    for k, beta in enumerate(betas):
        lnz = np.array([rows[k][0] for rows in sector_rows])
        E = np.array([rows[k][1] for rows in sector_rows])
        var = np.array([rows[k][2] for rows in sector_rows])
        wf = np.array([rows[k][3] for rows in sector_rows])
        ng = np.array([rows[k][4] for rows in sector_rows])
        wt = np.exp(lnz - lnz.max())
        wt /= wt.sum()
        Em = float(wt @ E)
        cv = beta * beta * (wt @ (E * E) - Em * Em + wt @ var) / n
        out.append(
            FluxSectorResult(
                beta=float(beta), energy=Em / n, cv=float(cv),
                flux=float(wt @ wf), neg=float(wt @ ng),
            )
        )
    return out


def _even_subsets(n):
    for k in range(0, n + 1, 2):
        yield from combinations(range(n), k)


def cv_from_derivative(lattice, betas, boundary="antiperiodic", rel_step=1e-3):
    """C_v per site from the numerical beta derivative of the exact E(beta)."""
    out = []
    cut = bipartition(lattice)
    for beta in np.atleast_1d(betas):
        h = beta * rel_step
        lo, mid, hi = exact_flux_sum(lattice, [beta - h, beta, beta + h],
                                     boundary=boundary, cut=cut)
        dE = (hi.energy - lo.energy) / (2 * h)
        out.append(float(-beta * beta * dE))
    return out


def flux_mc(lattice, beta, sweeps=2000, burn_in=None, seed=0,
            boundary="antiperiodic", cut=None):
    """Metropolis over the gauge field via flux-pair toggles; binned errors.

    The chain state is the plaquette flux pattern with the same deterministic
    gauge representative as the exact sum (fermion boundary class fixed), so
    proposals flip the two fluxes adjacent to a random bond and the weight is
    the fermionic partition function of the representative.
    """
    if burn_in is None:
        burn_in = max(sweeps // 5, 10)
    if burn_in >= sweeps:
        raise KitaevError("burn_in must be smaller than sweeps")
    if cut is None:
        cut = bipartition(lattice)
    rng = np.random.default_rng(np.random.SeedSequence([seed, lattice.L]))
    bond_plaqs = {}
    for p in lattice.plaquettes:
        for b in p.bonds:
            bond_plaqs.setdefault(int(b), []).append(p.id)
    w = np.ones(lattice.n_plaquettes, dtype=int)
    u = flux_representative(lattice, w)
    A = quadratic_hamiltonian(lattice, u, boundary)
    lnz = sector_thermal(mode_energies(A), beta)[0]
    nb = lattice.n_bonds
    series = {"energy": [], "e2": [], "var": [], "flux": [], "neg": []}
    for sweep in range(sweeps):
        for b in rng.integers(0, nb, size=nb):
            p1, p2 = bond_plaqs[int(b)]
            w[p1] = -w[p1]
            w[p2] = -w[p2]
            u2 = flux_representative(lattice, w)
            A2 = quadratic_hamiltonian(lattice, u2, boundary)
            lnz2 = sector_thermal(mode_energies(A2), beta)[0]
            if np.log(rng.random()) < lnz2 - lnz:
                lnz, A, u = lnz2, A2, u2
            else:
                w[p1] = -w[p1]
                w[p2] = -w[p2]
        if sweep >= burn_in:
            a = mode_energies(A)
            _, E, var = sector_thermal(a, beta)
            series["energy"].append(E)
            series["e2"].append(E * E)
            series["var"].append(var)
            series["flux"].append(float(np.mean(plaquette_flux(lattice, u))))
            series["neg"].append(_negativity(thermal_covariance(A, beta), cut.in_a))
    n = lattice.n_sites
    Em, Ee, _ = binned(series["energy"])
    e2m, e2e, _ = binned(series["e2"])
    vm, ve, _ = binned(series["var"])
    fm, fe, _ = binned(series["flux"])
    gm, ge, _ = binned(series["neg"])
    cv = beta * beta * (e2m - Em * Em + vm) / n
    cv_err = beta * beta * np.sqrt(e2e ** 2 + (2 * abs(Em) * Ee) ** 2 + ve ** 2) / n
    return FluxSectorResult(
        beta=float(beta), energy=Em / n, cv=float(cv), flux=fm, neg=gm,
        energy_err=Ee / n, cv_err=float(cv_err), flux_err=fe, neg_err=ge,
    )
