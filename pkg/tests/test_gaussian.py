import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from floqmc.gaussian import (
    GaussianState,
    LayerKernel,
    antisymmetry_defect,
    apply_layer,
    compose,
    correlation_profile,
    log_weight_from_spectrum,
    negativity,
    spectrum,
    thermal_quantities,
)
from floqmc.lattice import build_lattice, build_schedule, bipartition
from floqmc.circuit import (
    GaugeTrajectory,
    MeasurementStrength,
    evolve_state,
    layer_kernels,
    net_field,
)

import fock

RNG = np.random.default_rng(12345)


# ------------------------------------------------------------- compose

def test_compose_identity_element():
    x = fock.rand_antisym(RNG, 6, scale=0.7)
    zero = np.zeros_like(x)
    assert np.max(np.abs(compose(x, zero) - x)) < 1e-12
    assert np.max(np.abs(compose(zero, x) - x)) < 1e-12


def test_compose_matches_dense_fock_product():
    cs = fock.majorana_ops(2)
    for _ in range(5):
        x = fock.rand_antisym(RNG, 4, scale=0.7)
        y = fock.rand_antisym(RNG, 4, scale=0.7)
        rx = fock.gaussian_from_cov(x, cs)
        ry = fock.gaussian_from_cov(y, cs)
        ref = fock.cov_of(rx @ ry, cs)
        got = compose(x, y)
        assert np.max(np.abs(got - ref)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_compose_tanh_addition(seed):
    # commuting single-bond case: tanh(a/2) (+) tanh(b/2) = tanh((a+b)/2)
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-2, 2, size=2)
    x = np.zeros((2, 2))
    y = np.zeros((2, 2))
    x[0, 1], x[1, 0] = np.tanh(a / 2), -np.tanh(a / 2)
    y[0, 1], y[1, 0] = np.tanh(b / 2), -np.tanh(b / 2)
    out = compose(x, y)
    assert out[0, 1] == pytest.approx(np.tanh((a + b) / 2), abs=1e-12)


# ------------------------------------------------------------- apply_layer

def _kernel(site_a, site_b, eta, tau, idx=0):
    return LayerKernel(
        round_index=idx,
        site_a=np.asarray(site_a),
        site_b=np.asarray(site_b),
        eta=np.asarray(eta),
        tau=tau,
    )


def test_apply_layer_tau_zero_is_identity_channel():
    state = GaussianState.maximally_mixed(6)
    k = _kernel([0, 2, 4], [1, 3, 5], [1, -1, 1], 0.0)
    out = apply_layer(state, k)
    assert np.max(np.abs(out.cov)) == 0.0
    assert out.log_weight == pytest.approx(3 * np.log(2))  # unchanged ln 2^{N/2}


def test_apply_layer_single_bond_probability_half():
    # maximally mixed, one bond: p(eta) = 1/2 each after normalization
    for eta in (+1, -1):
        state = GaussianState.maximally_mixed(2)
        out = apply_layer(state, _kernel([0], [1], [eta], 0.9))
        p = np.exp(out.log_weight - np.log(2 * np.cosh(0.9)) - np.log(2.0))
        assert p == pytest.approx(0.5, abs=1e-12)
        assert out.cov[0, 1] == pytest.approx(eta * np.tanh(0.9), abs=1e-12)


def test_apply_layer_matches_dense_fock():
    cs = fock.majorana_ops(3)
    tau = 1.1
    G0 = fock.rand_antisym(RNG, 6, scale=0.7)
    rho = fock.gaussian_from_cov(G0, cs)
    T = fock.bond_operator(cs, 0, 1, tau) @ fock.bond_operator(cs, 2, 3, -tau)
    ref_rho = T @ rho @ T
    ref_cov = fock.cov_of(ref_rho, cs).real
    ref_lnw = np.log(np.trace(ref_rho).real)
    state = GaussianState(G0.copy(), 0.0)
    out = apply_layer(state, _kernel([0, 2], [1, 3], [1, -1], tau))
    assert np.max(np.abs(out.cov - ref_cov)) < 1e-12
    assert out.log_weight == pytest.approx(ref_lnw, abs=1e-12)


def test_apply_layer_rejects_overlapping_bonds():
    with pytest.raises(Exception):
        _kernel([0, 1], [1, 2], [1, 1], 0.5)


def test_hexagon_weight_matches_dense_enumeration():
    # 2-round hexagon, all outcomes +1: exp(log_weight) = dense Tr(K K^dag)
    cs = fock.majorana_ops(3)
    tau = MeasurementStrength(0.125 * np.pi).tau
    bonds = [(0, 1), (2, 1), (2, 3), (4, 3), (4, 5), (0, 5)]
    T0 = np.eye(8, dtype=complex)
    for a, b in (bonds[0], bonds[2], bonds[4]):
        T0 = T0 @ fock.bond_operator(cs, a, b, tau)
    T1 = np.eye(8, dtype=complex)
    for a, b in (bonds[1], bonds[3], bonds[5]):
        T1 = T1 @ fock.bond_operator(cs, a, b, tau)
    dense = np.trace(T1 @ T0 @ T0 @ T1).real
    state = GaussianState.maximally_mixed(6)
    state = apply_layer(state, _kernel([0, 2, 4], [1, 3, 5], [1, 1, 1], tau, 0))
    state = apply_layer(state, _kernel([2, 4, 0], [1, 3, 5], [1, 1, 1], tau, 1))
    assert np.exp(state.log_weight) == pytest.approx(dense, rel=1e-12)


# ------------------------------------------------------------- spectrum

def test_spectrum_tau_zero_all_eps_zero():
    lat = build_lattice(3)
    sched = build_schedule(lat, 3)
    ms = MeasurementStrength(0.0)
    net = np.ones(sched.n_slots, dtype=np.int8)
    spec = spectrum(layer_kernels(ms, sched, net), 0.0, beta=4)
    assert np.max(np.abs(spec.eps)) < 1e-12
    th = thermal_quantities(spec)
    assert th.lambda0 / lat.n_sites == pytest.approx(-np.log(2) / 2, abs=1e-10)
    # maximally mixed fermion sector: S_c/(N ln 2) = 1/2
    assert th.S_c / (lat.n_sites * np.log(2)) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("L", [3, 6])
def test_spectrum_clifford_lyapunov(L):
    lat = build_lattice(L)
    sched = build_schedule(lat, L)
    ms = MeasurementStrength(np.pi / 4)  # clamped to pi/4 - 1e-6
    net = np.ones(sched.n_slots, dtype=np.int8)
    spec = spectrum(layer_kernels(ms, sched, net), ms.tau, beta=L + 1)
    th = thermal_quantities(spec)
    target = -np.log(2) / (3 * (1 + 1 / L))
    assert th.lambda0 / lat.n_sites == pytest.approx(target, abs=1e-6)


def test_spectrum_particle_hole_symmetry():
    lat = build_lattice(3)
    sched = build_schedule(lat, 3)
    ms = MeasurementStrength(0.18 * np.pi)
    rng = np.random.default_rng(5)
    net = (rng.integers(0, 2, sched.n_slots) * 2 - 1).astype(np.int8)
    kernels = layer_kernels(ms, sched, net)
    # full eigenvalue ladder of the stabilized product must pair (m, 1/m)
    from floqmc.gaussian import layer_transfer

    M = None
    scale = 0.0
    for k in kernels:
        E = layer_transfer(k, lat.n_sites)
        M = E @ E if M is None else E @ M @ E
        s = np.linalg.norm(M, 2)
        M /= s
        scale += np.log(s)
    w = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    lw = np.log(w) + scale
    assert np.max(np.abs(np.sort(lw) + np.sort(-lw)[::-1])) < 1e-8


def test_spectral_vs_incremental_log_weight():
    lat = build_lattice(3)
    sched = build_schedule(lat, 3)
    rng = np.random.default_rng(7)
    for t in (0.05, 0.125, 0.22):
        ms = MeasurementStrength(t * np.pi)
        net = (rng.integers(0, 2, sched.n_slots) * 2 - 1).astype(np.int8)
        st = evolve_state(ms, sched, net)
        spec = spectrum(layer_kernels(ms, sched, net), ms.tau, beta=4)
        lw = log_weight_from_spectrum(spec)
        assert st.log_weight == pytest.approx(lw, rel=1e-8)


# ------------------------------------------------------------- thermal

def test_thermal_single_mode_zero_energy():
    from floqmc.gaussian import Spectrum

    spec = Spectrum(eps=np.array([0.0]), beta=4.0, log_b=0.0)
    th = thermal_quantities(spec)
    assert th.F == pytest.approx(-np.log(4) / 8, abs=1e-14)  # -(1/2 beta) ln 4
    assert th.E == 0.0
    assert th.S_c == pytest.approx(np.log(2), abs=1e-14)
    # cross-check against the dense two-mode thermal trace at eps = 0:
    # Tr e^{0} = 2 over one fermionic mode -> S = ln 2
    assert th.varE == 0.0


def test_thermal_gapped_pure_limit():
    from floqmc.gaussian import Spectrum

    spec = Spectrum(eps=np.array([-50.0]), beta=10.0, log_b=0.0)
    th = thermal_quantities(spec)
    assert th.S_c == pytest.approx(0.0, abs=1e-12)
    assert th.E == pytest.approx(-25.0, abs=1e-10)  # -(1/2) eps tanh -> eps/2
    assert th.varE == pytest.approx(0.0, abs=1e-12)
    assert th.F <= th.E


def test_thermal_gap_two_smallest():
    from floqmc.gaussian import Spectrum

    spec = Spectrum(eps=np.array([-0.3, -1.2, -0.1]), beta=2.0, log_b=0.0)
    th = thermal_quantities(spec)
    assert th.gap == pytest.approx(0.4)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_thermal_invariants(seed):
    from floqmc.gaussian import Spectrum

    rng = np.random.default_rng(seed)
    eps = -np.abs(rng.uniform(0, 3, size=6))
    beta = rng.uniform(0.5, 12)
    th = thermal_quantities(Spectrum(eps=eps, beta=beta, log_b=0.0))
    assert th.S_c >= -1e-12
    assert th.varE >= 0.0
    assert th.F <= th.E + 1e-12


# ------------------------------------------------------------- negativity

def test_negativity_zero_state():
    in_a = np.array([True] * 3 + [False] * 3)
    assert negativity(np.zeros((6, 6)), in_a) == pytest.approx(0.0, abs=1e-12)


def test_negativity_single_dimer_across():
    G = np.zeros((4, 4))
    G[0, 2], G[2, 0] = 1.0, -1.0
    in_a = np.array([True, True, False, False])
    assert negativity(G, in_a) == pytest.approx(np.log(2) / 2, abs=1e-12)
    G2 = np.zeros((4, 4))
    G2[0, 1], G2[1, 0] = 1.0, -1.0
    assert negativity(G2, in_a) == pytest.approx(0.0, abs=1e-10)


def test_negativity_matches_dense_partial_time_reversal():
    cs = fock.majorana_ops(3)
    in_a = np.array([True, False, True, False, False, True])
    for _ in range(4):
        G = fock.rand_antisym(RNG, 6, scale=0.85)
        rho = fock.gaussian_from_cov(G, cs)
        ref = fock.dense_negativity(rho, cs, {0, 2, 5})
        assert negativity(G, in_a) == pytest.approx(ref, abs=1e-9)


def test_negativity_permutation_invariance():
    rng = np.random.default_rng(3)
    G = fock.rand_antisym(rng, 8, scale=0.8)
    in_a = np.array([True, True, True, True, False, False, False, False])
    base = negativity(G, in_a)
    perm = np.array([2, 0, 3, 1, 6, 7, 4, 5])  # permutes within A and within B
    Gp = G[np.ix_(perm, perm)]
    assert negativity(Gp, in_a) == pytest.approx(base, abs=1e-10)


@pytest.mark.parametrize("L", [3, 6])
def test_negativity_clifford_area_law(L):
    lat = build_lattice(L)
    sched = build_schedule(lat, L)
    cut = bipartition(lat)
    ms = MeasurementStrength(np.pi / 4)
    traj = GaugeTrajectory.all_plus(sched)
    st = evolve_state(ms, sched, net_field(traj, sched))
    assert negativity(st.cov, cut.in_a) == pytest.approx(
        L * np.log(2) / 3, abs=1e-6
    )


# ------------------------------------------------------------- profile

def test_correlation_profile_zero_and_clifford():
    lat = build_lattice(3)
    sched = build_schedule(lat, 3)
    prof = correlation_profile(np.zeros((18, 18)), lat)
    assert all(v == 0.0 for _, v in prof)
    # Clifford limit: support only at nearest-neighbour (dimer) distance
    ms = MeasurementStrength(np.pi / 4)
    traj = GaugeTrajectory.all_plus(sched)
    st = evolve_state(ms, sched, net_field(traj, sched))
    prof = correlation_profile(st.cov, lat)
    dmin = prof[0][0]
    assert dmin == pytest.approx(np.sqrt(3) / 3, rel=1e-6)
    for d, v in prof[1:]:
        assert v < 1e-10
    assert prof[0][1] > 0.1


def test_antisymmetry_preserved():
    lat = build_lattice(3)
    sched = build_schedule(lat, 3)
    rng = np.random.default_rng(11)
    ms = MeasurementStrength(0.2 * np.pi)
    net = (rng.integers(0, 2, sched.n_slots) * 2 - 1).astype(np.int8)
    st = evolve_state(ms, sched, net)
    assert antisymmetry_defect(st.cov) < 1e-10
    assert np.linalg.norm(st.cov, 2) <= 1.0 + 1e-10
