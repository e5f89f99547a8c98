import numpy as np
import pytest
from itertools import product

from floqmc.dense_oracle import (
    OracleError,
    apply_weak_measurement,
    apply_weak_measurement_gates,
    crosscheck,
    enumerate_protocol,
    maximally_mixed,
    pauli_string,
)
from floqmc.lattice import build_custom_graph

HEX_BONDS = [(0, 1), (2, 1), (2, 3), (4, 3), (4, 5), (0, 5)]
HEX_COLORS = [1, 2, 1, 2, 1, 2]


def hexagon():
    return build_custom_graph(6, HEX_BONDS, [[0, 2, 4], [1, 3, 5]], HEX_COLORS)


def single_bond(r):
    return build_custom_graph(2, [(0, 1)], [[0]] * r)


def test_weak_measurement_on_mixed_pair():
    rho = maximally_mixed(2)
    t = 0.15 * np.pi
    tau = 2 * np.arctanh(np.tan(t))
    zz = pauli_string(2, {0: "Z", 1: "Z"})
    for s in (+1, -1):
        out, p = apply_weak_measurement(rho, (0, 1), "Z", t, s)
        assert p == pytest.approx(0.5, abs=1e-12)
        assert np.trace(out @ zz).real == pytest.approx(s * np.tanh(tau), abs=1e-12)
        assert np.trace(out).real == pytest.approx(1.0, abs=1e-12)
        w = np.linalg.eigvalsh(out)
        assert w.min() > -1e-10


def test_projective_limit():
    rho = maximally_mixed(2)
    zz = pauli_string(2, {0: "Z", 1: "Z"})
    out, p = apply_weak_measurement(rho, (0, 1), "Z", np.pi / 4, +1)
    assert np.trace(out @ zz).real == pytest.approx(1.0, abs=1e-5)


def test_gate_decomposition_equals_direct():
    rng = np.random.default_rng(2)
    for _ in range(25):
        X = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = X @ X.conj().T
        rho /= np.trace(rho)
        t = rng.uniform(0.01, np.pi / 4 - 0.01)
        s = int(rng.choice([1, -1]))
        basis = str(rng.choice(["X", "Y", "Z"]))
        r1, p1 = apply_weak_measurement(rho, (0, 1), basis, t, s)
        r2, p2 = apply_weak_measurement_gates(rho, (0, 1), basis, t, s)
        assert abs(p1 - p2) < 1e-12
        assert np.max(np.abs(r1 - r2)) < 1e-12


def test_invalid_pair():
    with pytest.raises(OracleError):
        apply_weak_measurement(maximally_mixed(2), (0, 0), "Z", 0.1, 1)


def test_single_bond_enumeration_identities():
    r = 4
    graph, sched = single_bond(r)
    t = 0.12 * np.pi
    tau = 2 * np.arctanh(np.tan(t))
    records = enumerate_protocol(graph, sched, t)
    assert len(records) == 2 ** r
    assert sum(rec.probability for rec in records) == pytest.approx(1.0, abs=1e-12)
    # [<O> s_r] = tanh tau (last outcome)
    acc = sum(
        rec.probability * rec.expectations["parity_0"] * rec.outcomes[-1]
        for rec in records
    )
    assert acc == pytest.approx(np.tanh(tau), abs=1e-12)
    # [s_m s_n] = 1 - cosh^-2 tau
    acc = sum(
        rec.probability * rec.outcomes[0] * rec.outcomes[2] for rec in records
    )
    assert acc == pytest.approx(1 - np.cosh(tau) ** -2, abs=1e-12)
    # bimodal closed form for P(s_tot)
    from math import comb

    dist = {}
    for rec in records:
        st = sum(rec.outcomes)
        dist[st] = dist.get(st, 0.0) + rec.probability
    for st, p in dist.items():
        ref = np.cosh(tau * st) * comb(r, (r + st) // 2) / (2 * np.cosh(tau)) ** r
        assert p == pytest.approx(ref, abs=1e-10)


def test_hexagon_flux_correlation():
    graph, sched = hexagon()
    t = 0.15 * np.pi
    tau = 2 * np.arctanh(np.tan(t))
    W = pauli_string(6, {q: "Z" for q in range(6)})
    records = enumerate_protocol(graph, sched, t, {"flux": W})
    # [<W> W_s] = tanh^6 tau with the plaquette sign convention
    acc = sum(
        rec.probability * rec.expectations["flux"] * np.prod(rec.outcomes)
        for rec in records
    )
    assert abs(acc) == pytest.approx(np.tanh(tau) ** 6, abs=1e-12)
    # [<W>] = [W_s] = 0
    for f in (
        lambda rec: rec.expectations["flux"],
        lambda rec: np.prod(rec.outcomes),
    ):
        assert sum(rec.probability * f(rec) for rec in records) == pytest.approx(
            0.0, abs=1e-12
        )


def test_too_many_slots():
    graph, sched = single_bond(3)
    sched.rounds = [np.array([0])] * 30
    with pytest.raises(OracleError):
        enumerate_protocol(graph, build_custom_graph(2, [(0, 1)], [[0]] * 25)[1], 0.1)


@pytest.mark.parametrize("t_pi", [0.05, 0.125, 0.2, 0.24])
def test_crosscheck_single_bond(t_pi):
    graph, sched = single_bond(3)
    rep = crosscheck(graph, sched, t_pi * np.pi)
    assert rep["max_dev"] <= 1e-9


def test_crosscheck_hexagon():
    graph, sched = hexagon()
    rep = crosscheck(
        graph, sched, 0.125 * np.pi,
        flux_bonds=list(range(6)), flux_sites=list(range(6)), flux_basis="Z",
    )
    assert rep["max_dev"] <= 1e-9
    assert rep["flux_orientation_sign"] in (1.0, -1.0)


def test_crosscheck_tau_zero_uniform():
    graph, sched = single_bond(2)
    records = enumerate_protocol(graph, sched, 0.0)
    for rec in records:
        assert rec.probability == pytest.approx(0.25, abs=1e-12)
        assert rec.expectations["parity_0"] == pytest.approx(0.0, abs=1e-12)


def test_povm_channel_trace_preservation():
    rng = np.random.default_rng(9)
    for _ in range(5):
        X = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = X @ X.conj().T
        rho /= np.trace(rho)
        t = rng.uniform(0, np.pi / 4)
        ps = [apply_weak_measurement(rho, (0, 1), "Y", t, s)[1] for s in (1, -1)]
        assert sum(ps) == pytest.approx(1.0, abs=1e-12)
