"""Two-step nested Monte Carlo: a Metropolis chain over the measurement
record s (weight p_s = p_{s, u=+1}) with branch chains over the static gauge
field u at fixed s (weight p_su).

The outer sweep walks the slots round by round keeping left (rounds < n) and
right (rounds >= n) evolution environments, so one proposal costs a rank-2
covariance update plus one overlap log-determinant instead of a full
re-evolution; ``no_cache`` switches to the naive full re-evaluation for
validation.  Inner u-flips re-evolve the whole trajectory (a u flip touches
every scheduled round of its bond color).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .circuit import layer_kernels, slot_arrays
from .gaussian import GaussianState, spectrum, thermal_quantities


class SamplerError(RuntimeError):
    pass


@dataclass
class CombConfig:
    outer_sweeps: int = 2000
    burn_in: int = 500
    branch_interval: int = 100
    inner_sweeps: int = 1000
    chains: int = 1
    seed: int = 0
    inner_burn_in: int | None = None  # extra discarded inner sweeps per branch

    def __post_init__(self):
        if self.burn_in >= self.outer_sweeps:
            raise SamplerError("burn_in must be smaller than outer_sweeps")
        if self.branch_interval < 1:
            raise SamplerError("branch_interval must be >= 1")
        if self.inner_burn_in is None:
            # branches start cold at u = +1; a short equilibration prefix
            # removes the systematic bias that a plain average would carry
            self.inner_burn_in = max(self.inner_sweeps // 5, 4)


@dataclass
class Estimator:
    """name + accumulation class; `outer` maps an outer-sample context to a
    value (float, or vector for multi-location estimators); replica
    estimators also carry `inner`, evaluated on inner-sample contexts, and
    the sample value is mean(outer_vec * inner_vec)."""

    name: str
    kind: str  # "net" or "replica"
    outer: callable
    inner: callable | None = None
    names: tuple | None = None  # labels when `outer` returns a vector


def binned(series):
    """Binning analysis: (mean, stderr, tau_int).

    Bin size doubles per level; the standard error is read off the coarsest
    level that still has >= 32 bins and tau_int from the variance ratio.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 8:
        raise SamplerError(f"series of length {n} is too short to bin")
    mean = float(x.mean())
    var0 = float(x.var(ddof=1))
    naive = var0 / n
    if naive == 0.0:
        return mean, 0.0, 0.5
    level = x
    err = np.sqrt(naive)
    while level.size // 2 >= 32:
        m = level.size // 2
        level = 0.5 * (level[: 2 * m : 2] + level[1 : 2 * m : 2])
        err = float(np.sqrt(level.var(ddof=1) / level.size))
    tau_int = 0.5 * err * err / naive
    return mean, float(err), float(tau_int)


@dataclass
class EstimatorRecord:
    name: str
    mean: float
    stderr: float
    tau_int: float
    n_outer: int
    n_inner: int


class _Evolver:
    """Shared flat arrays + trajectory evaluation for one (ms, schedule)."""

    def __init__(self, ms, schedule):
        self.ms = ms
        self.schedule = schedule
        self.tau = ms.tau
        sa = slot_arrays(schedule)
        self.slot_a = sa.a
        self.slot_b = sa.b
        self.slot_bond = sa.bond
        self.round_ptr = sa.round_ptr
        self.n_sites = schedule.graph.n_sites
        self.n_slots = schedule.n_slots
        self.n_rounds = schedule.n_rounds
        self.log2_half = 0.5 * self.n_sites * np.log(2.0)
        # slots of each bond, for u flips
        self.bond_slots = [
            np.flatnonzero(self.slot_bond == b) for b in range(schedule.graph.n_bonds)
        ]

    def evolve(self, net, out=None):
        """Full forward evolution; returns (cov, ln Tr)."""
        G = out if out is not None else np.zeros((self.n_sites, self.n_sites))
        G[:] = 0.0
        lnw = self.log2_half + kernels.apply_slots(
            G, self.slot_a, self.slot_b, net, self.tau, 0, self.n_slots
        )
        return G, lnw

    def spectrum(self, net):
        return spectrum(
            layer_kernels(self.ms, self.schedule, net), self.tau, beta=self.n_rounds
        )


class OuterCtx:
    """Lazy per-sample quantities handed to estimators (outer chain)."""

    def __init__(self, evolver, net, cov, logw):
        self.evolver = evolver
        self.schedule = evolver.schedule
        self.net = net
        self.cov = cov
        self.logw = logw
        self._spec = None
        self._thermal = None

    @property
    def spec(self):
        if self._spec is None:
            self._spec = self.evolver.spectrum(self.net)
        return self._spec

    @property
    def thermal(self):
        if self._thermal is None:
            self._thermal = thermal_quantities(self.spec)
        return self._thermal


class InnerCtx(OuterCtx):
    def __init__(self, evolver, u, net, cov, logw):
        super().__init__(evolver, net, cov, logw)
        self.u = u


class OuterChain:
    """Metropolis over single-slot flips of s at u = +1."""

    def __init__(self, ms, schedule, rng, no_cache=False):
        self.ev = _Evolver(ms, schedule)
        self.rng = rng
        self.no_cache = no_cache
        self.s = np.ones(self.ev.n_slots, dtype=np.int8)
        self.sweeps_done = 0
        self.flagged = 0
        self.proposals = 0
        self.accepted = 0
        self.cov = np.zeros((self.ev.n_sites, self.ev.n_sites))
        self.logw = 0.0
        self._scratch = np.zeros_like(self.cov)
        self.cov, self.logw = self.ev.evolve(self.s, out=self.cov)

    def _overlap(self, Gl, lnl, Gr, lnr):
        sign, ld = np.linalg.slogdet(np.eye(self.ev.n_sites) - Gl @ Gr)
        if sign <= 0 or not np.isfinite(ld):
            return None
        return lnl + lnr - self.ev.log2_half + 0.5 * ld

    def _draw_proposals(self):
        """L^2 (r+1) single-slot proposals per sweep, grouped by round.

        Slots are drawn uniformly with replacement within their round: an
        exactly-once scan is not ergodic in the tau -> 0 limit, where every
        proposal is accepted and the sweep degenerates to a global flip.
        """
        ev = self.ev
        idx, rand = [], []
        for n in range(ev.n_rounds):
            lo, hi = int(ev.round_ptr[n]), int(ev.round_ptr[n + 1])
            idx.append(self.rng.integers(lo, hi, size=hi - lo))
            rand.append(self.rng.random(hi - lo))
        return idx, rand

    def sweep(self):
        """One Metropolis pass of n_slots proposals; detailed balance w.r.t. p_s."""
        ev = self.ev
        tau = ev.tau
        idx, rand = self._draw_proposals()
        if self.no_cache:
            self._sweep_nocache(idx, rand)
            return
        n_sites = ev.n_sites
        # right environments omega_n (rounds n..r applied two-sidedly), n = r+1 .. 0
        omegas = [None] * (ev.n_rounds + 1)
        st = GaussianState.maximally_mixed(n_sites)
        omegas[ev.n_rounds] = (st.cov.copy(), st.log_weight)
        for n in range(ev.n_rounds - 1, -1, -1):
            G = omegas[n + 1][0].copy()
            dl = kernels.apply_slots(
                G, ev.slot_a, ev.slot_b, self.s, tau,
                ev.round_ptr[n], ev.round_ptr[n + 1],
            )
            omegas[n] = (G, omegas[n + 1][1] + dl)
        sigma = GaussianState.maximally_mixed(n_sites)
        sig_cov, sig_lnw = sigma.cov, sigma.log_weight
        for n in range(ev.n_rounds):
            om_cov, om_lnw = omegas[n]
            om_cov = om_cov.copy()
            cur = self._overlap(sig_cov, sig_lnw, om_cov, om_lnw)
            if cur is None:
                raise SamplerError("environment overlap is singular")
            for k, u in zip(idx[n], rand[n]):
                k = int(k)
                eta = float(self.s[k])
                trial_cov = self._scratch
                np.copyto(trial_cov, om_cov)
                dl = kernels.apply_bond(
                    trial_cov, int(ev.slot_a[k]), int(ev.slot_b[k]), -eta, 2.0 * tau
                )
                trial = self._overlap(sig_cov, sig_lnw, trial_cov, om_lnw + dl)
                self.proposals += 1
                if trial is None or not np.isfinite(trial):
                    self.flagged += 1
                    continue
                if np.log(u) < trial - cur:
                    self.accepted += 1
                    self.s[k] = -self.s[k]
                    om_cov, self._scratch = trial_cov, om_cov
                    om_lnw += dl
                    cur = trial
            dl = kernels.apply_slots(
                sig_cov, ev.slot_a, ev.slot_b, self.s, tau,
                ev.round_ptr[n], ev.round_ptr[n + 1],
            )
            sig_lnw += dl
        self.cov, self.logw = sig_cov, sig_lnw
        self.sweeps_done += 1

    def _sweep_nocache(self, idx, rand):
        ev = self.ev
        G = np.empty_like(self.cov)
        for n in range(ev.n_rounds):
            for k, u in zip(idx[n], rand[n]):
                k = int(k)
                self.s[k] = -self.s[k]
                G, lnw = ev.evolve(self.s, out=G)
                self.proposals += 1
                if not np.isfinite(lnw):
                    self.flagged += 1
                    self.s[k] = -self.s[k]
                    continue
                if np.log(u) < lnw - self.logw:
                    self.accepted += 1
                    self.logw = lnw
                    self.cov, G = G, self.cov
                else:
                    self.s[k] = -self.s[k]
        self.sweeps_done += 1

    def revalidate(self, tol=1e-6):
        _, lnw = self.ev.evolve(self.s, out=self._scratch.copy())
        if abs(lnw - self.logw) > tol * max(1.0, abs(lnw)):
            raise SamplerError(
                f"cached log-weight drifted: {self.logw} vs {lnw}"
            )
        self.logw = lnw

    def ctx(self):
        return OuterCtx(self.ev, self.s.copy(), self.cov, self.logw)


class InnerChain:
    """Metropolis over single u-bond flips at fixed s (weight p_su)."""

    def __init__(self, evolver, s, rng):
        self.ev = evolver
        self.s = s
        self.rng = rng
        self.u = np.ones(self.ev.schedule.graph.n_bonds, dtype=np.int8)
        self.net = s.copy()
        self.cov = np.zeros((self.ev.n_sites, self.ev.n_sites))
        self.cov, self.logw = self.ev.evolve(self.net, out=self.cov)
        self._trial = np.empty_like(self.cov)
        self.flagged = 0
        self.proposals = 0
        self.accepted = 0

    def sweep(self):
        ev = self.ev
        nb = len(ev.bond_slots)
        bonds = self.rng.integers(0, nb, size=nb)  # with replacement: ergodic
        rand = self.rng.random(nb)
        for b, u in zip(bonds, rand):
            b = int(b)
            slots = ev.bond_slots[b]
            self.net[slots] = -self.net[slots]
            G, lnw = ev.evolve(self.net, out=self._trial)
            self.proposals += 1
            if not np.isfinite(lnw):
                self.flagged += 1
                self.net[slots] = -self.net[slots]
                continue
            if np.log(u) < lnw - self.logw:
                self.accepted += 1
                self.u[b] = -self.u[b]
                self.logw = lnw
                self.cov, self._trial = G, self.cov
            else:
                self.net[slots] = -self.net[slots]

    def ctx(self):
        return InnerCtx(self.ev, self.u.copy(), self.net.copy(), self.cov, self.logw)


@dataclass
class ChainResult:
    net_series: dict
    rep_series: dict
    n_outer: int
    n_inner: int
    flagged: int
    proposals: int


def run_chain(cfg, ms, schedule, estimators, chain_index, no_cache=False,
              checkpoint=None, checkpoint_every=None):
    """One comb: outer chain + branch inner chains; returns raw series."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, chain_index]))
    chain = OuterChain(ms, schedule, rng, no_cache=no_cache)
    net_ests = [e for e in estimators if e.kind == "net"]
    rep_ests = [e for e in estimators if e.kind == "replica"]
    net_series = {e.name: [] for e in net_ests}
    rep_series = {e.name: [] for e in rep_ests}
    n_inner_total = 0
    start_sweep = 0
    if checkpoint is not None and checkpoint.get("sweep", 0) > 0:
        start_sweep = checkpoint["sweep"]
        chain.s = checkpoint["s"].astype(np.int8).copy()
        chain.cov, chain.logw = chain.ev.evolve(chain.s, out=chain.cov)
        rng.bit_generator.state = json.loads(checkpoint["rng_state"])
        net_series = {k: list(v) for k, v in checkpoint["net_series"].items()}
        rep_series = {k: list(v) for k, v in checkpoint["rep_series"].items()}
        n_inner_total = checkpoint["n_inner_total"]
        chain.sweeps_done = start_sweep
    for sweep in range(start_sweep, cfg.outer_sweeps):
        chain.sweep()
        chain.revalidate()
        if sweep >= cfg.burn_in:
            ctx = chain.ctx()
            for e in net_ests:
                net_series[e.name].append(e.outer(ctx))
            if (sweep - cfg.burn_in) % cfg.branch_interval == 0 and rep_ests:
                outer_vecs = {e.name: np.atleast_1d(e.outer(ctx)) for e in rep_ests}
                inner = InnerChain(chain.ev, chain.s.copy(), rng)
                vals = {e.name: [] for e in rep_ests}
                for _ in range(cfg.inner_burn_in):
                    inner.sweep()
                for _ in range(cfg.inner_sweeps):
                    inner.sweep()
                    ictx = inner.ctx()
                    for e in rep_ests:
                        iv = np.atleast_1d(e.inner(ictx))
                        vals[e.name].append(float(np.mean(outer_vecs[e.name] * iv)))
                n_inner_total += cfg.inner_sweeps
                chain.flagged += inner.flagged
                chain.proposals += inner.proposals
                for e in rep_ests:
                    rep_series[e.name].append(float(np.mean(vals[e.name])))
        if (
            checkpoint_every
            and (sweep + 1) % checkpoint_every == 0
            and checkpoint is not None
        ):
            checkpoint.clear()
            checkpoint.update(
                sweep=sweep + 1,
                s=chain.s.copy(),
                rng_state=json.dumps(rng.bit_generator.state),
                net_series={k: list(v) for k, v in net_series.items()},
                rep_series={k: list(v) for k, v in rep_series.items()},
                n_inner_total=n_inner_total,
            )
            if callable(getattr(checkpoint, "flush", None)):
                checkpoint.flush()
    if chain.proposals and chain.flagged / chain.proposals > 1e-3:
        raise SamplerError(
            f"{chain.flagged}/{chain.proposals} proposals flagged; aborting"
        )
    return ChainResult(
        net_series={k: np.asarray(v, dtype=float) for k, v in net_series.items()},
        rep_series={k: np.asarray(v, dtype=float) for k, v in rep_series.items()},
        n_outer=cfg.outer_sweeps - cfg.burn_in,
        n_inner=n_inner_total,
        flagged=chain.flagged,
        proposals=chain.proposals,
    )


def merge_records(results, estimators):
    """Combine per-chain series into EstimatorRecords (fixed chain order)."""
    out = {}
    for e in estimators:
        store = "net_series" if e.kind == "net" else "rep_series"
        data = np.concatenate(
            [np.asarray(getattr(r, store)[e.name], dtype=float) for r in results],
            axis=0,
        )
        names = e.names or (e.name,)
        n_outer = sum(r.n_outer for r in results)
        n_inner = max(r.n_inner for r in results)
        for j, name in enumerate(names):
            col = data[:, j] if data.ndim > 1 else data
            if col.size >= 8:
                mean, err, tau = binned(col)
            else:  # too few branches to bin; naive error
                mean = float(col.mean())
                err = float(np.sqrt(col.var(ddof=1) / col.size)) if col.size > 1 else 0.0
                tau = 0.5
            out[name] = EstimatorRecord(
                name=name, mean=mean, stderr=err, tau_int=tau,
                n_outer=n_outer, n_inner=n_inner,
            )
    return out


def run_comb(cfg, ms, schedule, estimators, no_cache=False,
             checkpoint_store=None, checkpoint_every=None):
    """Full comb over cfg.chains independent chains; deterministic merge."""
    results = []
    for c in range(cfg.chains):
        ck = None
        if checkpoint_store is not None:
            ck = checkpoint_store.setdefault(c, {})
        results.append(
            run_chain(cfg, ms, schedule, estimators, c, no_cache=no_cache,
                      checkpoint=ck, checkpoint_every=checkpoint_every)
        )
    return merge_records(results, estimators), results
