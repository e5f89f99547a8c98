"""Weak-measurement Floquet protocol on a measurement graph.

A trajectory is the pair (s, u): one recorded sign per scheduled slot plus a
static gauge sign per bond.  Only the slotwise product net = s * u enters the
fermionic weight.  The outcome convention is rho_s ~ exp(+tau s O), i.e. a +1
outcome biases the measured parity towards +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian import (
    GaussianState,
    LayerKernel,
    Spectrum,
    apply_layer,
    log_weight_from_spectrum,
    spectrum,
)

T_CLAMP = np.pi / 4.0 - 1e-6


@dataclass(frozen=True)
class MeasurementStrength:
    """Gate angle t in [0, pi/4]; tanh(tau/2) = tan(t), clamped below pi/4."""

    t: float

    def __post_init__(self):
        if not (0.0 <= self.t <= np.pi / 4.0 + 1e-12):
            raise ValueError(f"t = {self.t} outside [0, pi/4]")

    @property
    def t_eff(self):
        return min(self.t, T_CLAMP)

    @property
    def tau(self):
        return 2.0 * np.arctanh(np.tan(self.t_eff))

    @classmethod
    def from_pi_units(cls, t_over_pi):
        return cls(float(t_over_pi) * np.pi)


@dataclass
class GaugeTrajectory:
    """s: sign per scheduled slot; u: sign per bond."""

    s: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.s = np.ascontiguousarray(self.s, dtype=np.int8)
        self.u = np.ascontiguousarray(self.u, dtype=np.int8)
        if not np.all(np.abs(self.s) == 1) or not np.all(np.abs(self.u) == 1):
            raise ValueError("trajectory entries must be +-1")

    @classmethod
    def all_plus(cls, schedule):
        return cls(
            np.ones(schedule.n_slots, dtype=np.int8),
            np.ones(schedule.graph.n_bonds, dtype=np.int8),
        )


@dataclass
class SlotArrays:
    """Flat per-slot views of a schedule used by the kernels."""

    bond: np.ndarray  # bond id per slot
    a: np.ndarray  # site_a per slot
    b: np.ndarray
    round_ptr: np.ndarray  # slots of round n are [round_ptr[n], round_ptr[n+1])

    @classmethod
    def from_schedule(cls, schedule):
        g = schedule.graph
        bond = np.concatenate([np.asarray(r, dtype=np.int64) for r in schedule.rounds])
        ptr = np.zeros(len(schedule.rounds) + 1, dtype=np.int64)
        np.cumsum([len(r) for r in schedule.rounds], out=ptr[1:])
        return cls(
            bond=bond,
            a=np.ascontiguousarray(g.bond_a[bond], dtype=np.int64),
            b=np.ascontiguousarray(g.bond_b[bond], dtype=np.int64),
            round_ptr=ptr,
        )


def slot_arrays(schedule):
    cached = getattr(schedule, "_slot_arrays", None)
    if cached is None:
        cached = SlotArrays.from_schedule(schedule)
        schedule._slot_arrays = cached
    return cached


def net_field(traj, schedule):
    """net(slot) = s(slot) * u(bond of slot)."""
    sa = slot_arrays(schedule)
    if traj.s.shape[0] != sa.bond.shape[0] or traj.u.shape[0] != schedule.graph.n_bonds:
        raise ValueError("trajectory shape does not match schedule")
    return (traj.s * traj.u[sa.bond]).astype(np.int8)


def layer_kernels(ms, schedule, net):
    """LayerKernel list for rounds 0..r given a per-slot net field."""
    sa = slot_arrays(schedule)
    tau = ms.tau
    out = []
    for n in range(schedule.n_rounds):
        lo, hi = sa.round_ptr[n], sa.round_ptr[n + 1]
        out.append(
            LayerKernel(
                round_index=n,
                site_a=sa.a[lo:hi],
                site_b=sa.b[lo:hi],
                eta=net[lo:hi],
                tau=tau,
            )
        )
    return out


@dataclass
class TrajectoryResult:
    cov: np.ndarray
    spectrum: Spectrum
    log_w: float  # ln p_su + ln B
    net: np.ndarray


def evolve_state(ms, schedule, net):
    """Maximally mixed start, all rounds applied two-sidedly; final state."""
    from . import kernels as _k

    sa = slot_arrays(schedule)
    state = GaussianState.maximally_mixed(schedule.graph.n_sites)
    state.log_weight += _k.apply_slots(
        state.cov, sa.a, sa.b, np.ascontiguousarray(net, dtype=np.int8),
        ms.tau, 0, len(sa.bond),
    )
    return state


def run_trajectory(ms, lattice, schedule, traj):
    """Evolve one trajectory; cov, spectrum and ln p_su + ln B are consistent."""
    net = net_field(traj, schedule)
    state = evolve_state(ms, schedule, net)
    spec = spectrum(layer_kernels(ms, schedule, net), ms.tau, beta=schedule.n_rounds)
    return TrajectoryResult(cov=state.cov, spectrum=spec, log_w=state.log_weight, net=net)


def log_weight(ms, lattice, schedule, traj):
    """ln p_su + ln B; gauge invariant, depends on the trajectory only via net."""
    net = net_field(traj, schedule)
    return evolve_state(ms, schedule, net).log_weight


def log_weight_spectral(ms, schedule, net):
    """Independent route: -beta F from the stabilized spectrum."""
    spec = spectrum(layer_kernels(ms, schedule, net), ms.tau, beta=schedule.n_rounds)
    return log_weight_from_spectrum(spec)


def log_b(ms, schedule):
    return schedule.n_slots * np.log(2.0 * np.cosh(ms.tau))


def sample_uniform_trajectory(rng, schedule):
    """i.i.d. uniform signs for every slot and bond."""
    s = rng.integers(0, 2, size=schedule.n_slots).astype(np.int8) * 2 - 1
    u = rng.integers(0, 2, size=schedule.graph.n_bonds).astype(np.int8) * 2 - 1
    return GaugeTrajectory(s=s, u=u)
