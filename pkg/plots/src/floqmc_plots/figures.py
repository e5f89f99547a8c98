"""Deterministic figure rendering from simulator CSVs."""

import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import curves
from .csvio import read_rows, select, series_by

KINDS = ("flux_purification", "cv_two_peak", "entropy_decay",
         "negativity_scan", "negativity_scaling", "correlation", "kitaev")

_STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "font.family": "DejaVu Sans",
    "axes.grid": True,
    "grid.alpha": 0.3,
}


class RenderError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RenderError(f"unknown figure kind {self.kind!r}")


def _load(spec):
    rows = []
    for path in spec.inputs:
        rows.extend(read_rows(path))
    if not rows:
        raise RenderError("no rows in input CSVs")
    return rows


def _errbar(ax, xs, ys, es, label, marker="o"):
    ax.errorbar(xs, ys, yerr=es, marker=marker, ms=3.5, lw=1, capsize=2,
                label=label)


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    # strip metadata so identical inputs give identical bytes
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def render(spec):
    """Render one figure; returns the output path."""
    with plt.rc_context(_STYLE):
        rows = _load(spec)
        fig = _RENDERERS[spec.kind](rows, spec.options)
        _save(fig, spec.output)
    return spec.output



def _legend(ax):
    handles, labels = ax.get_legend_handles_labels()
    if handles:
        ax.legend(fontsize=7)

def _fig_flux(rows, options):
    data = select(rows, observable="flux_ea")
    if not data:
        raise RenderError("no flux_ea rows")
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    tt = np.linspace(0.01, 0.2499, 300)
    for L, grp in series_by(data, "L").items():
        ts = [r.t for r in grp]
        _errbar(ax, ts, [r.mean for r in grp], [r.stderr for r in grp],
                f"L = {L}")
        r_depth = grp[0].r
        ax.plot(tt, curves.w2_ansatz(tt * np.pi, r_depth), lw=0.8, alpha=0.7)
        tc = curves.lcrossing(None, r_depth) / np.pi
        ax.axvline(tc, color="gray", lw=0.8, ls=":")
    ax.axhline(0.5, color="gray", lw=0.8, ls="--")
    ax.set_xlabel(r"$t/\pi$")
    ax.set_ylabel(r"$[\langle W\rangle^2]$")
    ax.legend(loc="upper left", fontsize=7)
    fig.tight_layout()
    # collapse inset
    ins = fig.add_axes([0.62, 0.25, 0.3, 0.3])
    for L, grp in series_by(data, "L").items():
        ys = curves.collapse_transform([r.mean for r in grp], grp[0].r)
        ins.plot([r.t for r in grp], ys, "o", ms=2.5)
    ins.plot(tt, curves.collapse_target(tt * np.pi), "r-", lw=0.8)
    ins.set_xlabel(r"$t/\pi$", fontsize=6)
    ins.tick_params(labelsize=6)
    return fig


def _fig_cv(rows, options):
    data = select(rows, observable="cv")
    if not data:
        raise RenderError("no cv rows")
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    for L, grp in series_by(data, "L").items():
        ts = np.array([r.t for r in grp])
        ys = np.array([r.mean for r in grp])
        _errbar(ax, ts, ys, [r.stderr for r in grp], f"L = {L}")
        # peak markers: strict local maxima of the sampled curve
        for i in range(1, len(ts) - 1):
            if ys[i] > ys[i - 1] and ys[i] > ys[i + 1]:
                ax.axvline(ts[i], color="gray", lw=0.8, ls=":")
    ax.set_xlabel(r"$t/\pi$")
    ax.set_ylabel(r"$C_v$")
    _legend(ax)
    fig.tight_layout()
    return fig


def _fig_entropy(rows, options):
    data = select(rows, observable="entropy_density")
    if not data:
        raise RenderError("no entropy_density rows")
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    by_L = series_by(data, "L")
    for L, grp in by_L.items():
        _errbar(ax, [r.t for r in grp], [r.mean for r in grp],
                [r.stderr for r in grp], f"L = {L}")
    ax.set_xlabel(r"$t/\pi$")
    ax.set_ylabel(r"$S_c/(N \ln 2)$")
    _legend(ax)
    fig.tight_layout()
    # z(t) inset from the scaling form S/N = exp(-a r / L^z), r = L
    if len(by_L) >= 3:
        ts_all = sorted({r.t for r in data})
        zs, zts = [], []
        for t in ts_all:
            pts = [(L, r.mean) for L, grp in by_L.items()
                   for r in grp if r.t == t]
            if len(pts) < 3:
                continue
            Ls = np.array([p[0] for p in pts], dtype=float)
            y = np.array([p[1] for p in pts], dtype=float)
            if np.any(y <= 0) or np.any(y >= 1):
                continue
            g = np.log(-np.log(y))
            X = np.column_stack([np.log(Ls), np.ones_like(Ls)])
            coef = np.linalg.lstsq(X, g, rcond=None)[0]
            zs.append(1.0 - coef[0])
            zts.append(t)
        if zs:
            ins = fig.add_axes([0.55, 0.55, 0.32, 0.3])
            ins.plot(zts, zs, "s-", ms=2.5, lw=0.8)
            ins.axhline(1.0, color="gray", lw=0.6, ls="--")
            ins.set_ylabel("z", fontsize=6)
            ins.tick_params(labelsize=6)
    return fig


def _fig_negativity(rows, options):
    data = select(rows, observable="negativity")
    if not data:
        raise RenderError("no negativity rows")
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    for L, grp in series_by(data, "L").items():
        _errbar(ax, [r.t for r in grp], [r.mean for r in grp],
                [r.stderr for r in grp], f"L = {L}")
        ax.axhline(L * np.log(2) / 3, color="gray", lw=0.6, ls=":")
    ax.set_xlabel(r"$t/\pi$")
    ax.set_ylabel(r"$\mathcal{E}$")
    _legend(ax)
    fig.tight_layout()
    return fig


def _fig_negativity_scaling(rows, options):
    data = select(rows, observable="negativity")
    if not data:
        raise RenderError("no negativity rows")
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    by_t = series_by(data, "t")
    for t, grp in by_t.items():
        grp = sorted(grp, key=lambda r: r.L)
        Ls = np.array([r.L for r in grp], dtype=float)
        ys = np.array([r.mean for r in grp])
        _errbar(ax, Ls, ys, [r.stderr for r in grp], f"t = {t}")
        if len(Ls) >= 2:
            X = np.column_stack([Ls, Ls * np.log(Ls)]) * (np.log(2) / 3)
            coef = np.linalg.lstsq(X, ys, rcond=None)[0]
            LL = np.linspace(Ls.min(), Ls.max(), 50)
            ax.plot(LL, (coef[0] * LL + coef[1] * LL * np.log(LL))
                    * np.log(2) / 3, lw=0.8, alpha=0.7)
    ax.set_xlabel("L")
    ax.set_ylabel(r"$\mathcal{E}$")
    _legend(ax)
    fig.tight_layout()
    return fig


def _fig_correlation(rows, options):
    data = select(rows, prefix="corr_")
    if not data:
        raise RenderError("no corr_* rows")
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    by_t = {}
    for r in data:
        by_t.setdefault((r.L, r.t), []).append(r)
    for (L, t), grp in sorted(by_t.items()):
        pts = sorted((float(r.observable.split("_")[1]), r.mean, r.stderr)
                     for r in grp)
        ds = [p[0] for p in pts]
        ys = [max(p[1], 1e-16) for p in pts]
        ax.errorbar(ds, ys, yerr=[p[2] for p in pts], marker="o", ms=3,
                    lw=0.8, label=f"L = {L}, t = {t}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("distance")
    ax.set_ylabel(r"$\overline{|\Gamma_{ij}|}$")
    _legend(ax)
    fig.tight_layout()
    return fig


def _fig_kitaev(rows, options):
    data = select(rows, prefix="ht_")
    if not data:
        raise RenderError("no ht_* rows")
    fig, axes = plt.subplots(1, 3, figsize=(9.5, 3.0))
    panels = (("ht_negativity", r"$\mathcal{E}$"), ("ht_cv", r"$C_v$"),
              ("ht_flux", r"$\langle W\rangle$"))
    for ax, (name, label) in zip(axes, panels):
        series = select(data, observable=name)
        for L, grp in series_by(series, "L").items():
            _errbar(ax, [r.t for r in grp], [r.mean for r in grp],
                    [r.stderr for r in grp], f"L = {L}")
        ax.set_xscale("log")
        ax.set_xlabel("T")
        ax.set_ylabel(label)
        _legend(ax)
    fig.tight_layout()
    return fig


_RENDERERS = {
    "flux_purification": _fig_flux,
    "cv_two_peak": _fig_cv,
    "entropy_decay": _fig_entropy,
    "negativity_scan": _fig_negativity,
    "negativity_scaling": _fig_negativity_scaling,
    "correlation": _fig_correlation,
    "kitaev": _fig_kitaev,
}

_REPORT_ORDER = ("flux_purification", "cv_two_peak", "entropy_decay",
                 "negativity_scan", "negativity_scaling", "correlation",
                 "kitaev")


def report(directory, output=None):
    """Composite page: every renderable panel from the CSVs in a directory.

    Missing panels are skipped and listed; never fails on an empty subset.
    """
    import glob

    paths = sorted(glob.glob(os.path.join(directory, "**", "*.csv"),
                             recursive=True))
    rows = []
    for p in paths:
        try:
            rows.extend(read_rows(p))
        except Exception:
            continue
    output = output or os.path.join(directory, "report.png")
    rendered, skipped = [], []
    with plt.rc_context(_STYLE):
        panels = []
        for kind in _REPORT_ORDER:
            try:
                panels.append((kind, _RENDERERS[kind](rows, {})))
            except RenderError:
                skipped.append(kind)
        if not panels:
            fig = plt.figure(figsize=(4, 2))
            fig.text(0.5, 0.5, "no renderable data", ha="center")
            _save(fig, output)
            return output, [], list(_REPORT_ORDER)
        n = len(panels)
        ncol = 2
        nrow = (n + ncol - 1) // ncol
        comp = plt.figure(figsize=(8.6, 3.4 * nrow))
        for i, (kind, sub) in enumerate(panels):
            # re-render panel into the composite grid via an image round trip
            import io

            buf = io.BytesIO()
            sub.savefig(buf, format="png", metadata={"Software": None})
            plt.close(sub)
            buf.seek(0)
            img = plt.imread(buf)
            ax = comp.add_subplot(nrow, ncol, i + 1)
            ax.imshow(img)
            ax.set_axis_off()
            ax.set_title(kind, fontsize=8)
            rendered.append(kind)
        if skipped:
            comp.text(0.01, 0.005, "skipped: " + ", ".join(skipped),
                      fontsize=6, color="gray")
        _save(comp, output)
    return output, rendered, skipped
