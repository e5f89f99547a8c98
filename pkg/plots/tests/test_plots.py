import json
import os
import subprocess
import sys

import numpy as np
import pytest

from floqmc_plots import curves
from floqmc_plots.csvio import SchemaError, read_rows, select, series_by
from floqmc_plots.figures import FigureSpec, RenderError, render, report

HEADER = "# floqmc-csv v1\nL,r,t,seed,observable,mean,stderr,tau_int,n_outer,n_inner\n"


def _write(path, rows):
    with open(path, "w") as fh:
        fh.write(HEADER)
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")


def _flux_rows():
    rows = []
    for L, r in ((3, 3), (6, 6)):
        for t in np.linspace(0.02, 0.24, 12):
            w2 = float(curves.w2_ansatz(t * np.pi, r))
            rows.append((L, r, round(float(t), 6), 1, "flux_ea", w2, 0.01,
                         0.6, 400, 100))
    return rows


def test_read_rows_roundtrip(tmp_path):
    path = str(tmp_path / "a.csv")
    _write(path, _flux_rows())
    rows = read_rows(path)
    assert len(rows) == 24
    assert {r.L for r in rows} == {3, 6}
    groups = series_by(select(rows, observable="flux_ea"), "L")
    assert list(groups) == [3, 6]
    assert all(groups[3][i].t <= groups[3][i + 1].t for i in range(11))


def test_read_rows_rejects_bad_schema(tmp_path):
    path = str(tmp_path / "bad.csv")
    with open(path, "w") as fh:
        fh.write("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        read_rows(path)


def test_analytic_overlays_match_simulator():
    # the locally re-evaluated closed forms must equal the primary package's
    # observables at grid points to 1e-12 (external-interface contract)
    floqmc_obs = pytest.importorskip("floqmc.observables")
    ts = np.linspace(0.0, 0.2499, 40) * np.pi
    assert np.max(np.abs(curves.flux_cross(ts)
                         - floqmc_obs.flux_cross_exact(ts))) < 1e-12
    assert np.max(np.abs(curves.parity_cross(ts)
                         - floqmc_obs.parity_cross_exact(ts))) < 1e-12
    for r in (3, 6):
        tt = ts[ts > 0]
        assert np.max(np.abs(curves.w2_ansatz(tt, r)
                             - floqmc_obs.w2_ansatz(tt, r))) < 1e-12
        w2 = curves.w2_ansatz(tt, r)
        assert np.max(np.abs(curves.collapse_transform(w2, r)
                             - floqmc_obs.collapse_transform(w2, r))) < 1e-12


def test_render_flux_and_determinism(tmp_path):
    csv = str(tmp_path / "w2.csv")
    _write(csv, _flux_rows())
    out1 = str(tmp_path / "fig1.png")
    out2 = str(tmp_path / "fig2.png")
    render(FigureSpec(kind="flux_purification", inputs=[csv], output=out1))
    render(FigureSpec(kind="flux_purification", inputs=[csv], output=out2))
    b1 = open(out1, "rb").read()
    assert b1 == open(out2, "rb").read()
    assert b1[:8] == b"\x89PNG\r\n\x1a\n"


def test_render_all_kinds(tmp_path):
    rows = _flux_rows()
    for L in (3, 6):
        for t in np.linspace(0.02, 0.24, 12):
            t = round(float(t), 6)
            rows.append((L, L, t, 1, "cv", 0.3 + 0.2 * np.sin(20 * t) ** 2,
                         0.02, 0.5, 400, 100))
            rows.append((L, L, t, 1, "entropy_density",
                         round(float(np.exp(-2 * t * 10 / L ** 0.8)), 8),
                         0.003, 0.5, 400, 100))
            rows.append((L, L, t, 1, "negativity",
                         round(float(0.2 * L * (1 + t)), 8), 0.01, 0.5, 400, 0))
    for L in (3, 6):
        for d in (0.58, 1.0, 1.53, 2.0):
            rows.append((L, L, 0.125, 1, f"corr_{d:.6f}",
                         round(float(0.3 * d ** -2), 8), 0.001, 0.5, 400, 0))
    for T in (0.01, 0.1, 1.0, 10.0):
        for name, val in (("ht_energy", -0.7), ("ht_cv", 0.1),
                          ("ht_flux", 0.5), ("ht_negativity", 1.0)):
            rows.append((3, 0, T, 1, name, val, 0.01, 0.5, 100, 0))
    # entropy z-inset needs a third size
    for t in np.linspace(0.02, 0.24, 12):
        t = round(float(t), 6)
        rows.append((9, 9, t, 1, "entropy_density",
                     round(float(np.exp(-2 * t * 10 / 9 ** 0.8)), 8),
                     0.003, 0.5, 400, 100))
    csv = str(tmp_path / "all.csv")
    _write(csv, rows)
    for kind in ("flux_purification", "cv_two_peak", "entropy_decay",
                 "negativity_scan", "negativity_scaling", "correlation",
                 "kitaev"):
        out = str(tmp_path / f"{kind}.png")
        render(FigureSpec(kind=kind, inputs=[csv], output=out))
        assert os.path.getsize(out) > 1000


def test_render_empty_csv_errors(tmp_path):
    csv = str(tmp_path / "empty.csv")
    with open(csv, "w") as fh:
        fh.write(HEADER)
    with pytest.raises(RenderError):
        render(FigureSpec(kind="flux_purification", inputs=[csv],
                          output=str(tmp_path / "x.png")))
    with pytest.raises(RenderError):
        FigureSpec(kind="nope", inputs=[csv], output="x.png")


def test_report_composite_and_skips(tmp_path):
    d = tmp_path / "runs"
    d.mkdir()
    _write(str(d / "w2.csv"), _flux_rows())
    out, rendered, skipped = report(str(d))
    assert os.path.exists(out)
    assert "flux_purification" in rendered
    assert "kitaev" in skipped
    # kitaev-only directory renders only the finite-T panel
    d2 = tmp_path / "kit"
    d2.mkdir()
    rows = [(3, 0, T, 1, "ht_cv", 0.1, 0.01, 0.5, 10, 0)
            for T in (0.01, 0.1, 1.0)]
    _write(str(d2 / "k.csv"), rows)
    out2, rendered2, skipped2 = report(str(d2))
    assert rendered2 == ["kitaev"]
    # byte-identical re-render
    out3, _, _ = report(str(d2), output=str(tmp_path / "again.png"))
    b2 = open(out2, "rb").read()
    b3 = open(out3, "rb").read()
    assert b2 == b3


def test_report_empty_dir(tmp_path):
    out, rendered, skipped = report(str(tmp_path))
    assert os.path.exists(out)
    assert rendered == []


def test_cli_entry(tmp_path):
    csv = str(tmp_path / "w2.csv")
    _write(csv, _flux_rows())
    spec = {"kind": "flux_purification", "inputs": [csv],
            "output": str(tmp_path / "out.png")}
    sp = str(tmp_path / "spec.json")
    with open(sp, "w") as fh:
        json.dump(spec, fh)
    from floqmc_plots.cli import main

    assert main(["render", "--spec", sp]) == 0
    assert os.path.exists(spec["output"])
    assert main(["report", str(tmp_path)]) == 0
