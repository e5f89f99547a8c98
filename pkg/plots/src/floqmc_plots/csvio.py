"""Reader for the simulator's CSV schema.

Columns: L,r,t,seed,observable,mean,stderr,tau_int,n_outer,n_inner.
The t column is in units of pi for circuit sweeps and holds the temperature
for Kitaev (ht_*) rows.
"""

from dataclasses import dataclass


class SchemaError(ValueError):
    pass


COLUMNS = ("L", "r", "t", "seed", "observable", "mean", "stderr", "tau_int",
           "n_outer", "n_inner")


@dataclass
class Row:
    L: int
    r: int
    t: float
    seed: int
    observable: str
    mean: float
    stderr: float
    tau_int: float
    n_outer: int
    n_inner: int


def read_rows(path):
    rows = []
    with open(path) as fh:
        header_seen = False
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("L,"):
                if line != ",".join(COLUMNS):
                    raise SchemaError(f"{path}: unexpected columns {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != len(COLUMNS):
                raise SchemaError(f"{path}: bad row {line!r}")
            rows.append(
                Row(
                    L=int(parts[0]), r=int(parts[1]), t=float(parts[2]),
                    seed=int(parts[3]), observable=parts[4],
                    mean=float(parts[5]), stderr=float(parts[6]),
                    tau_int=float(parts[7]), n_outer=int(parts[8]),
                    n_inner=int(parts[9]),
                )
            )
        if not header_seen and rows:
            raise SchemaError(f"{path}: missing header")
    return rows


def select(rows, observable=None, prefix=None):
    out = rows
    if observable is not None:
        out = [r for r in out if r.observable == observable]
    if prefix is not None:
        out = [r for r in out if r.observable.startswith(prefix)]
    return out


def series_by(rows, key):
    """Group rows by an attribute, each group sorted by t."""
    groups = {}
    for r in rows:
        groups.setdefault(getattr(r, key), []).append(r)
    for g in groups.values():
        g.sort(key=lambda r: r.t)
    return dict(sorted(groups.items()))
