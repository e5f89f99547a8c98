"""Batch driver: config parsing, sweeps, checkpoint/resume, CSV + fits.

Config files are plain ``key = value`` text (see README for the grammar);
command-line flags override file values.  Angles are everywhere given in
units of pi.  All randomness flows from one 64-bit seed through named
sub-streams, and a fixed (seed, chains) pair reproduces output CSVs
byte-for-byte, including across checkpoint resume.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__, kernel_backend
from .circuit import MeasurementStrength
from .lattice import build_lattice, build_schedule, bipartition, build_custom_graph
from .observables import build_estimators, specific_heat
from .sampler import CombConfig, run_chain, merge_records

CSV_VERSION = "floqmc-csv v1"
CSV_COLUMNS = "L,r,t,seed,observable,mean,stderr,tau_int,n_outer,n_inner"

MODES = ("sweep", "point", "negativity-scan", "oracle-check", "kitaev", "fit",
         "lattice-info")

DEFAULT_ESTIMATORS = (
    "flux_ea", "flux_cross", "parity_cross", "energy", "energy_sq",
    "wick_var", "entropy", "energy_replica",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "sweep"
    L: int = 3
    r: int | None = None  # defaults to L
    t: list = field(default_factory=lambda: [0.125])  # units of pi
    seed: int = 1
    chains: int = 1
    outer_sweeps: int = 2000
    burn_in: int = 500
    branch_interval: int = 100
    inner_sweeps: int = 1000
    estimators: list = field(default_factory=lambda: list(DEFAULT_ESTIMATORS))
    out: str = "out"
    checkpoint_every: int = 0
    resume: bool = False
    no_cache: bool = False
    threads: int = 0  # 0: env var or 1
    betas: list = field(default_factory=lambda: [0.1, 1.0, 10.0, 100.0])
    kitaev_sweeps: int = 2000
    kitaev_mc: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.L < 3 or self.L % 3:
            raise ConfigError(f"L = {self.L} must be a positive multiple of 3")
        if self.r is None:
            self.r = self.L
        if self.r < 3 or self.r % 3:
            raise ConfigError(f"r = {self.r} must be a positive multiple of 3")
        for t in self.t:
            if not (0.0 <= t <= 0.25):
                raise ConfigError(f"t = {t} (units of pi) outside [0, 0.25]")
        if self.mode == "negativity-scan" and "negativity" not in self.estimators:
            self.estimators = ["negativity"]

    def comb(self):
        return CombConfig(
            outer_sweeps=self.outer_sweeps, burn_in=self.burn_in,
            branch_interval=self.branch_interval, inner_sweeps=self.inner_sweeps,
            chains=self.chains, seed=self.seed,
        )


_LIST_KEYS = {"t", "estimators", "betas"}
_BOOL_KEYS = {"resume", "no_cache", "kitaev_mc"}
_INT_KEYS = {"L", "r", "seed", "chains", "outer_sweeps", "burn_in",
             "branch_interval", "inner_sweeps", "checkpoint_every", "threads",
             "kitaev_sweeps"}


def parse_config_text(text):
    """key = value lines; '#' comments; lists are comma separated or [..]."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        out[key] = _parse_value(key, val, lineno)
    return out


def _parse_value(key, val, lineno=0):
    if key in _LIST_KEYS:
        items = val.strip("[]").split(",")
        vals = [item.strip() for item in items if item.strip()]
        if key == "estimators":
            return vals
        return [float(v) for v in vals]
    if key in _BOOL_KEYS:
        if val.lower() in ("true", "1", "yes"):
            return True
        if val.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"line {lineno}: bad boolean {val!r}")
    if key in _INT_KEYS:
        return int(val)
    return val


def parse_config(path=None, overrides=None):
    """File plus flag overrides -> validated RunConfig; unknown keys error."""
    data = {}
    if path:
        with open(path) as fh:
            data.update(parse_config_text(fh.read()))
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**data)


# ------------------------------------------------------------- output

def _fmt(x):
    if isinstance(x, float):
        return repr(float(x))
    return str(int(x)) if isinstance(x, (int, np.integer)) else str(x)


def write_csv(path, rows):
    """rows: (L, r, t, seed, observable, mean, stderr, tau_int, n_outer, n_inner)."""
    lines = [f"# {CSV_VERSION}", CSV_COLUMNS]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_csv(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("L,"):
                continue
            parts = line.split(",")
            rows.append(
                dict(
                    L=int(parts[0]), r=int(parts[1]), t=float(parts[2]),
                    seed=int(parts[3]), observable=parts[4], mean=float(parts[5]),
                    stderr=float(parts[6]), tau_int=float(parts[7]),
                    n_outer=int(parts[8]), n_inner=int(parts[9]),
                )
            )
    return rows


def write_provenance(path, cfg, extra=None):
    doc = {
        "version": __version__,
        "kernel_backend": kernel_backend,
        "csv_version": CSV_VERSION,
        "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
        "wall_time_s": extra.pop("wall_time_s", None) if extra else None,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ------------------------------------------------------------- checkpointing

class CheckpointStore:
    """Self-describing, versioned chain-state store (npz + json manifest)."""

    FORMAT = "floqmc-checkpoint v1"

    def __init__(self, path):
        self.path = path
        self.entries = {}  # (t_index, chain) -> dict

    def entry(self, t_index, chain):
        return self.entries.setdefault((t_index, chain), _CheckpointEntry(self))

    @classmethod
    def load(cls, path):
        store = cls(path)
        if not os.path.exists(path):
            return store
        with np.load(path, allow_pickle=False) as z:
            manifest = json.loads(str(z["manifest"]))
            if manifest["format"] != cls.FORMAT:
                raise ConfigError(f"unknown checkpoint format in {path}")
            for ent in manifest["entries"]:
                ti, c = ent["t_index"], ent["chain"]
                e = store.entry(ti, c)
                e["sweep"] = ent["sweep"]
                e["rng_state"] = ent["rng_state"]
                e["n_inner_total"] = ent["n_inner_total"]
                e["s"] = z[f"{ti}|{c}|s"]
                e["net_series"] = {
                    name: z[f"{ti}|{c}|net|{name}"] for name in ent["net_names"]
                }
                e["rep_series"] = {
                    name: z[f"{ti}|{c}|rep|{name}"] for name in ent["rep_names"]
                }
        return store

    def flush(self):
        manifest = {"format": self.FORMAT, "entries": []}
        arrays = {}
        for (ti, c), e in sorted(self.entries.items()):
            if "sweep" not in e:
                continue
            manifest["entries"].append(
                dict(
                    t_index=ti, chain=c, sweep=int(e["sweep"]),
                    rng_state=e["rng_state"],
                    n_inner_total=int(e["n_inner_total"]),
                    net_names=sorted(e["net_series"]),
                    rep_names=sorted(e["rep_series"]),
                )
            )
            arrays[f"{ti}|{c}|s"] = np.asarray(e["s"], dtype=np.int8)
            for name, v in e["net_series"].items():
                arrays[f"{ti}|{c}|net|{name}"] = np.asarray(v, dtype=float)
            for name, v in e["rep_series"].items():
                arrays[f"{ti}|{c}|rep|{name}"] = np.asarray(v, dtype=float)
        tmp = self.path + ".tmp"
        with open(tmp, "wb") as fh:
            np.savez(fh, manifest=json.dumps(manifest), **arrays)
        os.replace(tmp, self.path)


class _CheckpointEntry(dict):
    def __init__(self, store):
        super().__init__()
        self._store = store

    def flush(self):
        self._store.flush()


# ------------------------------------------------------------- run modes

def _one_point(args):
    """Worker: all chains for one t value. Returns (t_index, records, flags)."""
    (cfg_dict, t_index) = args
    cfg = RunConfig(**cfg_dict)
    t = cfg.t[t_index]
    lattice = build_lattice(cfg.L)
    schedule = build_schedule(lattice, cfg.r)
    cut = bipartition(lattice)
    ests = build_estimators(cfg.estimators, lattice, schedule, cut=cut)
    ms = MeasurementStrength.from_pi_units(t)
    comb = cfg.comb()
    store = None
    if cfg.checkpoint_every and cfg.out:
        path = os.path.join(cfg.out, f"checkpoint_t{t_index}.npz")
        store = CheckpointStore.load(path) if cfg.resume else CheckpointStore(path)
    results = []
    for c in range(cfg.chains):
        ck = store.entry(t_index, c) if store is not None else None
        results.append(
            run_chain(comb, ms, schedule, ests, c, no_cache=cfg.no_cache,
                      checkpoint=ck, checkpoint_every=cfg.checkpoint_every or None)
        )
    records = merge_records(results, ests)
    flagged = sum(r.flagged for r in results)
    # derived records
    derived = {}
    have_fluct = "energy_fluct" in records
    have_split = all(k in records for k in ("energy_sq", "energy_replica"))
    if "wick_var" in records and (have_fluct or have_split):
        cv, cv_err = specific_heat(records, beta=cfg.r + 1, n_sites=lattice.n_sites)
        derived["cv"] = (cv, cv_err)
    if "entropy" in records:
        rec = records["entropy"]
        denom = lattice.n_sites * np.log(2.0)
        derived["entropy_density"] = (rec.mean / denom, rec.stderr / denom)
    return t_index, records, derived, flagged


def run_sweep(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.time()
    tasks = [({f.name: getattr(cfg, f.name) for f in fields(cfg)}, i)
             for i in range(len(cfg.t))]
    threads = cfg.threads or int(os.environ.get("FLOQMC_THREADS", "1"))
    if threads > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(_one_point, tasks))
    else:
        outs = [_one_point(task) for task in tasks]
    outs.sort(key=lambda x: x[0])
    rows = []
    guard = {}
    for t_index, records, derived, flagged in outs:
        t = cfg.t[t_index]
        for name in sorted(records):
            rec = records[name]
            rows.append((cfg.L, cfg.r, t, cfg.seed, name, rec.mean, rec.stderr,
                         rec.tau_int, rec.n_outer, rec.n_inner))
        for name in sorted(derived):
            mean, err = derived[name]
            n_outer = records[next(iter(records))].n_outer
            rows.append((cfg.L, cfg.r, t, cfg.seed, name, mean, err, 0.0,
                         n_outer, 0))
        if "flux_cross" in records:
            rec = records["flux_cross"]
            exact = float(np.sin(2 * t * np.pi) ** 6)
            dev = abs(rec.mean - exact) / rec.stderr if rec.stderr > 0 else 0.0
            guard[repr(t)] = {"flux_cross": rec.mean, "exact": exact,
                              "sigma_dev": dev, "flagged": dev > 4.0}
    csv_path = os.path.join(cfg.out, "results.csv")
    write_csv(csv_path, rows)
    write_provenance(
        os.path.join(cfg.out, "provenance.json"), cfg,
        {"wall_time_s": time.time() - t0, "equilibration_guard": guard},
    )
    bad = [k for k, v in guard.items() if v["flagged"]]
    if bad:
        print(f"WARNING: equilibration guard flagged t = {bad}", file=sys.stderr)
    return csv_path


def run_lattice_info(cfg, dump_csv=False):
    lattice = build_lattice(cfg.L)
    cut = bipartition(lattice)
    from .lattice import r_crossings

    print(f"L = {lattice.L}")
    print(f"sites = {lattice.n_sites}")
    print(f"bonds = {lattice.n_bonds} ({lattice.n_bonds // 3} per color)")
    print(f"plaquettes = {lattice.n_plaquettes}")
    print(f"cut |A| = {int(cut.in_a.sum())}, crossing R dimers = "
          f"{r_crossings(lattice, cut)}")
    if dump_csv:
        print("bond_id,site_a,site_b,color")
        for b in lattice.bonds:
            print(f"{b.id},{b.site_a},{b.site_b},{'RGB'[b.color]}")


def run_oracle_check(cfg):
    """Single-bond and hexagon oracle suites; report + pass/fail exit."""
    from .dense_oracle import crosscheck

    os.makedirs(cfg.out, exist_ok=True)
    t_values = [0.05, 0.125, 0.2, 0.24]
    report = {"t_values_pi": t_values, "graphs": {}}
    graph, sched = build_custom_graph(2, [(0, 1)], [[0]] * 3)
    devs = []
    for t in t_values:
        rep = crosscheck(graph, sched, t * np.pi)
        devs.append(rep["max_dev"])
    report["graphs"]["single_bond_r3"] = {"max_dev": float(max(devs))}
    bonds = [(0, 1), (2, 1), (2, 3), (4, 3), (4, 5), (0, 5)]
    colors = [1, 2, 1, 2, 1, 2]
    graph, sched = build_custom_graph(6, bonds, [[0, 2, 4], [1, 3, 5]], colors)
    devs = []
    signs = set()
    for t in t_values:
        rep = crosscheck(graph, sched, t * np.pi, flux_bonds=list(range(6)),
                         flux_sites=list(range(6)), flux_basis="Z")
        devs.append(rep["max_dev"])
        signs.add(rep["flux_orientation_sign"])
    report["graphs"]["hexagon"] = {
        "max_dev": float(max(devs)),
        "flux_orientation_sign": sorted(signs),
    }
    max_dev = max(v["max_dev"] for v in report["graphs"].values())
    report["max_dev"] = max_dev
    report["pass"] = bool(max_dev <= 1e-9)
    path = os.path.join(cfg.out, "oracle_report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"oracle max deviation = {max_dev:.3e} -> "
          f"{'PASS' if report['pass'] else 'FAIL'}")
    return 0 if report["pass"] else 1


def run_kitaev(cfg):
    from .kitaev import exact_flux_sum, flux_mc

    os.makedirs(cfg.out, exist_ok=True)
    lattice = build_lattice(cfg.L)
    rows = []
    t0 = time.time()
    if cfg.L == 3 and not cfg.kitaev_mc:
        for res in exact_flux_sum(lattice, cfg.betas):
            for name, val, err in (
                ("ht_energy", res.energy, 0.0), ("ht_cv", res.cv, 0.0),
                ("ht_flux", res.flux, 0.0), ("ht_negativity", res.neg, 0.0),
            ):
                rows.append((cfg.L, 0, 1.0 / res.beta, cfg.seed, name, val, err,
                             0.0, 0, 0))
    else:
        for beta in cfg.betas:
            res = flux_mc(lattice, beta, sweeps=cfg.kitaev_sweeps, seed=cfg.seed)
            for name, val, err in (
                ("ht_energy", res.energy, res.energy_err),
                ("ht_cv", res.cv, res.cv_err),
                ("ht_flux", res.flux, res.flux_err),
                ("ht_negativity", res.neg, res.neg_err),
            ):
                rows.append((cfg.L, 0, 1.0 / beta, cfg.seed, name, val, err, 0.0,
                             cfg.kitaev_sweeps, 0))
    csv_path = os.path.join(cfg.out, "kitaev.csv")
    write_csv(csv_path, rows)
    write_provenance(os.path.join(cfg.out, "provenance.json"), cfg,
                     {"wall_time_s": time.time() - t0})
    return csv_path


def run_fit(kind, csv_paths, out=None, t_target=None):
    from .observables import (pseudo_threshold, fit_z, negativity_fit,
                              collapse_transform, sin2t)

    rows = [r for path in csv_paths for r in read_csv(path)]
    report = {"kind": kind, "inputs": list(csv_paths)}
    if kind == "threshold":
        by_L = {}
        for r in rows:
            if r["observable"] == "flux_ea":
                by_L.setdefault(r["L"], []).append(r)
        report["thresholds"] = {}
        for L, rs in sorted(by_L.items()):
            ts = [r["t"] for r in rs]
            w2 = [r["mean"] for r in rs]
            se = [r["stderr"] for r in rs]
            tc, sig = pseudo_threshold(ts, w2, se)
            report["thresholds"][str(L)] = {"t_c": tc, "sigma": sig}
    elif kind == "z":
        by_t = {}
        for r in rows:
            if r["observable"] == "entropy_density":
                by_t.setdefault(r["t"], []).append(r)
        report["z"] = {}
        for t, rs in sorted(by_t.items()):
            if len(rs) < 3:
                continue
            Ls = [r["L"] for r in rs]
            y = [r["mean"] for r in rs]
            se = [r["stderr"] for r in rs]
            z, a, cov = fit_z(Ls, y, se)
            report["z"][repr(t)] = {"z": z, "a": a,
                                    "z_err": float(np.sqrt(cov[0, 0]))}
    elif kind == "negativity":
        by_t = {}
        for r in rows:
            if r["observable"] == "negativity":
                by_t.setdefault(r["t"], []).append(r)
        report["negativity"] = {}
        for t, rs in sorted(by_t.items()):
            Ls = [r["L"] for r in rs]
            y = [r["mean"] for r in rs]
            se = [r["stderr"] for r in rs]
            c1, c2, cov = negativity_fit(Ls, y, se)
            report["negativity"][repr(t)] = {
                "c1": c1, "c2": c2,
                "c1_err": float(np.sqrt(cov[0, 0])),
                "c2_err": float(np.sqrt(cov[1, 1])),
            }
    elif kind == "collapse":
        pts = []
        for r in rows:
            if r["observable"] == "flux_ea":
                y = float(collapse_transform(r["mean"], r["r"]))
                ref = float(sin2t(r["t"] * np.pi) ** 12)
                pts.append({"t": r["t"], "L": r["L"], "collapse": y,
                            "target": ref, "abs_dev": abs(y - ref)})
        report["points"] = pts
        report["max_abs_dev"] = max((p["abs_dev"] for p in pts), default=None)
    else:
        raise ConfigError(f"unknown fit kind {kind!r}")
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return report


# ------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="floqmc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config")
        sp.add_argument("--L", type=int)
        sp.add_argument("--r", type=int)
        sp.add_argument("--t", type=str, help="t values in units of pi, comma separated")
        sp.add_argument("--t-grid", type=str, help="min:max:n in units of pi")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--chains", type=int)
        sp.add_argument("--outer-sweeps", type=int)
        sp.add_argument("--burn-in", type=int)
        sp.add_argument("--branch-interval", type=int)
        sp.add_argument("--inner-sweeps", type=int)
        sp.add_argument("--estimators", type=str)
        sp.add_argument("--out", type=str)
        sp.add_argument("--checkpoint-every", type=int)
        sp.add_argument("--resume", action="store_true", default=None)
        sp.add_argument("--no-cache", action="store_true", default=None)
        sp.add_argument("--threads", type=int)

    for name in ("sweep", "point", "negativity-scan"):
        common(sub.add_parser(name))
    sp = sub.add_parser("lattice-info")
    common(sp)
    sp.add_argument("--dump", action="store_true")
    sp = sub.add_parser("oracle-check")
    common(sp)
    sp = sub.add_parser("kitaev")
    common(sp)
    sp.add_argument("--betas", type=str)
    sp.add_argument("--kitaev-sweeps", type=int)
    sp.add_argument("--mc", action="store_true", default=None)
    sp = sub.add_parser("fit")
    sp.add_argument("kind", choices=["threshold", "z", "negativity", "collapse"])
    sp.add_argument("csv", nargs="+")
    sp.add_argument("--out")
    return p


def _overrides_from_args(args):
    ov = {}
    mapping = {
        "L": "L", "r": "r", "seed": "seed", "chains": "chains",
        "outer_sweeps": "outer_sweeps", "burn_in": "burn_in",
        "branch_interval": "branch_interval", "inner_sweeps": "inner_sweeps",
        "out": "out", "checkpoint_every": "checkpoint_every",
        "resume": "resume", "no_cache": "no_cache", "threads": "threads",
        "kitaev_sweeps": "kitaev_sweeps", "mc": "kitaev_mc",
    }
    for attr, key in mapping.items():
        if hasattr(args, attr) and getattr(args, attr) is not None:
            ov[key] = getattr(args, attr)
    if getattr(args, "t", None):
        ov["t"] = [float(x) for x in args.t.split(",")]
    if getattr(args, "t_grid", None):
        lo, hi, n = args.t_grid.split(":")
        ov["t"] = [float(x) for x in np.linspace(float(lo), float(hi), int(n))]
    if getattr(args, "estimators", None):
        ov["estimators"] = [x.strip() for x in args.estimators.split(",")]
    if getattr(args, "betas", None):
        ov["betas"] = [float(x) for x in args.betas.split(",")]
    return ov


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "fit":
        try:
            run_fit(args.kind, args.csv, out=args.out)
        except Exception as exc:  # structured error report
            json.dump({"error": str(exc)}, sys.stderr)
            return 1
        return 0
    ov = _overrides_from_args(args)
    if args.command in ("sweep", "point", "negativity-scan", "kitaev",
                        "lattice-info", "oracle-check"):
        ov["mode"] = args.command
    try:
        cfg = parse_config(getattr(args, "config", None), ov)
    except ConfigError as exc:
        json.dump({"error": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    if cfg.mode == "lattice-info":
        run_lattice_info(cfg, dump_csv=getattr(args, "dump", False))
        return 0
    if cfg.mode == "oracle-check":
        return run_oracle_check(cfg)
    if cfg.mode == "kitaev":
        run_kitaev(cfg)
        return 0
    run_sweep(cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
