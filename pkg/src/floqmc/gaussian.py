"""Majorana Gaussian-state calculus.

States are real antisymmetric N x N covariance matrices
Gamma_kl = <(i/2)[c_k, c_l]> together with an accumulated log trace weight.
A measured bond (a, b) with net sign eta and strength tau acts two-sidedly as
rho -> T rho T, T = exp((tau eta / 2) i c_a c_b); the identity-channel
covariance is 0 and composition follows the Cayley transfer calculus
V(Gamma) = (1 + i Gamma)(1 - i Gamma)^{-1}, under which operator products
multiply transfer matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


class EngineError(RuntimeError):
    pass


REG_EPS = 1e-12  # Tikhonov magnitude for near-singular compositions


@dataclass
class LayerKernel:
    """One measurement round: vertex-disjoint bonds with net signs."""

    round_index: int
    site_a: np.ndarray  # intp per bond
    site_b: np.ndarray
    eta: np.ndarray  # +-1 per bond
    tau: float

    def __post_init__(self):
        self.site_a = np.ascontiguousarray(self.site_a, dtype=np.int64)
        self.site_b = np.ascontiguousarray(self.site_b, dtype=np.int64)
        self.eta = np.ascontiguousarray(self.eta, dtype=np.int8)
        touched = np.concatenate([self.site_a, self.site_b])
        if len(np.unique(touched)) != len(touched):
            raise EngineError("layer bonds are not vertex-disjoint")
        if self.tau < 0:
            raise EngineError("tau must be non-negative")

    def covariance(self, n_sites):
        """tanh(tau/2) eta blocks on the measured pairs."""
        g = np.zeros((n_sites, n_sites))
        t = np.tanh(self.tau / 2.0)
        g[self.site_a, self.site_b] = t * self.eta
        g[self.site_b, self.site_a] = -t * self.eta
        return g


@dataclass
class GaussianState:
    """Covariance + log of the trace of the unnormalized evolved operator."""

    cov: np.ndarray
    log_weight: float = 0.0

    @classmethod
    def maximally_mixed(cls, n_sites):
        # Tr(identity) over the 2^{N/2}-dim Fock space
        return cls(np.zeros((n_sites, n_sites)), 0.5 * n_sites * np.log(2.0))

    def copy(self):
        return GaussianState(self.cov.copy(), self.log_weight)


def compose(x, y):
    """Covariance of the operator product rho_x rho_y.

    Cayley form (1 - ix)^{-1} (x + y) (1 - xy)^{-1} (1 - ix); the result is
    complex for non-commuting Hermitian factors and real when the product is
    Hermitian.  compose(x, 0) = x and compose(0, y) = y exactly.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    n = x.shape[0]
    eye = np.eye(n)
    mid = eye - x @ y
    try:
        inner = np.linalg.solve(mid, eye - 1j * x)
    except np.linalg.LinAlgError:
        inner = np.linalg.solve(mid + REG_EPS * eye, eye - 1j * x)
    out = np.linalg.solve(eye - 1j * x, (x + y) @ inner)
    if np.max(np.abs(out.imag)) < 1e-12:
        out = out.real
    return out


def apply_layer(state, kernel):
    """Two-sided layer application with log-weight tracking (new state)."""
    n = state.cov.shape[0]
    if kernel.site_a.size and max(kernel.site_a.max(), kernel.site_b.max()) >= n:
        raise EngineError("layer kernel does not match state dimension")
    out = state.copy()
    out.cov = np.ascontiguousarray(out.cov)
    dlnw = 0.0
    for a, b, e in zip(kernel.site_a, kernel.site_b, kernel.eta):
        dlnw += kernels.apply_bond(out.cov, int(a), int(b), float(e), kernel.tau)
    out.log_weight += dlnw
    return out


def layer_transfer(kernel, n_sites):
    """Single-particle transfer matrix exp(S) of one layer (complex Hermitian)."""
    E = np.eye(n_sites, dtype=complex)
    th = float(kernel.tau)
    ch, sh = np.cosh(th), np.sinh(th)
    for a, b, e in zip(kernel.site_a, kernel.site_b, kernel.eta):
        E[a, a] = ch
        E[b, b] = ch
        E[a, b] = 1j * sh * e
        E[b, a] = -1j * sh * e
    return E


@dataclass
class Spectrum:
    """Negative-branch single-mode energies of the effective Hamiltonian."""

    eps: np.ndarray  # N/2 values, all <= 0
    beta: float
    log_b: float  # ln B = (r+1) (N/2) ln(2 cosh tau)


def spectrum(kernels_list, tau, beta=None):
    """Stabilized product e^{S_r}..e^{S_0} e^{S_0}..e^{S_r} -> eps ladder.

    The accumulated matrix is rescaled by its largest eigenvalue after each
    two-sided multiplication so no overflow occurs even deep in the
    near-Clifford regime; only the dominant (eps <= 0) branch is returned.
    """
    if not kernels_list:
        raise EngineError("no layers")
    n = int(
        max(max(k.site_a.max(initial=0), k.site_b.max(initial=0)) for k in kernels_list)
    ) + 1
    n = max(n, _infer_n(kernels_list))
    if beta is None:
        beta = float(len(kernels_list))
    M = None
    logscale = 0.0
    for k in kernels_list:
        E = layer_transfer(k, n)
        if M is None:
            M = E @ E
        else:
            M = E @ M @ E
        s = np.linalg.norm(M, 2)
        M /= s
        logscale += np.log(s)
    M = 0.5 * (M + M.conj().T)
    w = np.linalg.eigvalsh(M)  # ascending
    top = w[n // 2:][::-1].copy()
    top[top < 1e-300] = 1e-300
    eps = -(np.log(top) + logscale) / beta
    eps = np.minimum(eps, 0.0)
    n_slots = sum(len(k.site_a) for k in kernels_list)
    log_b = n_slots * np.log(2.0 * np.cosh(tau))
    return Spectrum(eps=eps, beta=float(beta), log_b=log_b)


def _infer_n(kernels_list):
    m = 0
    for k in kernels_list:
        if k.site_a.size:
            m = max(m, int(k.site_a.max()), int(k.site_b.max()))
    return m + 1


@dataclass
class ThermalQuantities:
    F: float
    E: float
    varE: float
    S_c: float
    E0: float
    lambda0: float
    gap: float


def thermal_quantities(spec):
    """Free energy, energy, Wick variance, entropy, ground energy, Lyapunov."""
    eps = np.asarray(spec.eps)
    beta = spec.beta
    x = beta * eps / 2.0
    # ln(2(1 + cosh(beta eps))) = 2 ln(2 cosh x); 2 cosh x = e^{|x|}(1 + e^{-2|x|})
    ln2ch = np.abs(x) + np.log1p(np.exp(-2.0 * np.abs(x)))
    F = -np.sum(ln2ch) / beta
    th = np.tanh(x)
    E = -0.5 * np.sum(eps * th)
    varE = 0.25 * np.sum(eps * eps * (1.0 - th * th))
    S_c = beta * (E - F)
    E0 = 0.5 * np.sum(eps)
    lambda0 = -E0 - spec.log_b / beta
    mags = np.sort(np.abs(eps))
    gap = float(mags[0] + mags[1]) if len(mags) >= 2 else float("inf")
    return ThermalQuantities(
        F=float(F), E=float(E), varE=float(varE), S_c=float(S_c),
        E0=float(E0), lambda0=float(lambda0), gap=gap,
    )


def log_weight_from_spectrum(spec):
    """ln Tr(rho~) = ln(p_su B) = -beta * F = sum_pairs ln(2 cosh(beta eps / 2))."""
    eps = np.asarray(spec.eps)
    x = spec.beta * eps / 2.0
    ln2ch = np.abs(x) + np.log1p(np.exp(-2.0 * np.abs(x)))
    return float(np.sum(ln2ch))


def negativity(cov, in_a):
    """Fermionic entanglement negativity across the bipartition mask in_a.

    Partial time reversal over A multiplies the AA covariance block by -1 and
    the off-blocks by i, giving the complex antisymmetric Gamma_+ = cov(rho^R)
    with cov(rho^R dag) = Gamma_+^*.  The product state rho^R rho^R dag has
    covariance similar to W = (Gamma_+ + Gamma_+^*)(I - Gamma_+ Gamma_+^*)^{-1}
    by the Cayley transfer calculus, whose eigenvalue pairs +-(i xi) and the
    pair spectrum zeta of Gamma give
    E = sum_n ln(sqrt((1+xi_n)/2) + sqrt((1-xi_n)/2)) + (1/2) ln((1+zeta_n^2)/2).
    """
    in_a = np.asarray(in_a, dtype=bool)
    n = cov.shape[0]
    gp = np.array(cov, dtype=complex)
    a_idx = np.flatnonzero(in_a)
    b_idx = np.flatnonzero(~in_a)
    gp[np.ix_(a_idx, a_idx)] *= -1.0
    gp[np.ix_(a_idx, b_idx)] *= 1j
    gp[np.ix_(b_idx, a_idx)] *= 1j
    gc = gp.conj()
    eye = np.eye(n)
    mid = eye - gp @ gc  # equals I + Gamma_+ Gamma_- with Gamma_- = Gamma_+^dag
    try:
        w = np.linalg.eigvals((gp + gc) @ np.linalg.inv(mid))
    except np.linalg.LinAlgError:
        w = np.linalg.eigvals((gp + gc) @ np.linalg.inv(mid + REG_EPS * eye))
    xi = np.clip(np.abs(w), 0.0, 1.0)
    xi_half = np.sort(xi)[::-1][0::2]  # +-(i xi) pairs; terms are even in xi
    zeta = np.linalg.eigvalsh(1j * np.asarray(cov, dtype=complex))
    zeta_half = np.sort(zeta)[n // 2:]
    term1 = np.sum(np.log(np.sqrt((1.0 + xi_half) / 2.0) + np.sqrt((1.0 - xi_half) / 2.0)))
    term2 = 0.5 * np.sum(np.log1p(zeta_half ** 2) - np.log(2.0))
    return float(term1 + term2)


def correlation_profile(cov, lattice):
    """Mean |Gamma_ij| binned by minimum-image distance (sorted, deterministic)."""
    d = lattice.distance_matrix()
    n = cov.shape[0]
    iu = np.triu_indices(n, k=1)
    dist = np.round(d[iu], 9)
    vals = np.abs(cov[iu])
    out = []
    for dd in np.unique(dist):
        out.append((float(dd), float(np.mean(vals[dist == dd]))))
    return out


def antisymmetry_defect(cov):
    return float(np.max(np.abs(cov + cov.T)))
