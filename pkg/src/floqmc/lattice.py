"""Kekule-tricolored honeycomb geometry, measurement schedule, and entanglement cuts.

Unit cells (m, n) live on a torus of linear size L (L >= 3, L % 3 == 0) with
Bravais vectors a1 = (1, 0), a2 = (1/2, sqrt(3)/2).  Each cell carries an
A site and a B site; B(m, n) neighbours A(m, n), A(m+1, n) and A(m, n+1).
Plaquettes (one hexagon per cell) are colored by (m - n) mod 3 and every bond
takes the color absent from its two adjacent plaquettes, which makes each
color class a perfect matching.  Colors are indexed R=0, G=1, B=2 and carry
the measurement bases Z, Y, X respectively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COLOR_NAMES = ("R", "G", "B")
COLOR_BASES = ("Z", "Y", "X")

A1 = np.array([1.0, 0.0])
A2 = np.array([0.5, np.sqrt(3.0) / 2.0])
B_OFFSET = (A1 + A2) / 3.0


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class Bond:
    id: int
    site_a: int  # A-sublattice endpoint (orientation a -> b is fixed)
    site_b: int
    color: int


@dataclass(frozen=True)
class Plaquette:
    id: int
    color: int
    bonds: tuple  # 6 boundary bond ids, cyclic order
    sites: tuple  # 6 boundary site ids, cyclic order


@dataclass(frozen=True)
class Cut:
    """Bipartition of the sites into A and its complement."""

    in_a: np.ndarray  # bool per site
    axis: str = "a2"

    @property
    def a_sites(self):
        return np.flatnonzero(self.in_a)

    @property
    def b_sites(self):
        return np.flatnonzero(~self.in_a)


class Lattice:
    """Periodic Kekule honeycomb with deterministic integer ids.

    Site ids: A(m, n) = 2*(m*L + n), B(m, n) = 2*(m*L + n) + 1.
    Bond ids: 3*(m*L + n) + d where d in {0, 1, 2} labels the bond attached
    to B(m, n) towards A(m, n), A(m+1, n), A(m, n+1) respectively.
    Plaquette ids: m*L + n.
    """

    def __init__(self, L):
        if L < 3 or L % 3 != 0:
            raise LatticeError(f"L must be a multiple of 3 and >= 3, got {L}")
        self.L = int(L)
        self.n_sites = 2 * L * L
        self.n_bonds = 3 * L * L
        self.n_plaquettes = L * L
        self.sublattice = np.tile(np.array([0, 1], dtype=np.int8), L * L)
        self.positions = np.empty((self.n_sites, 2))
        for m in range(L):
            for n in range(L):
                r = m * A1 + n * A2
                self.positions[self.site_a(m, n)] = r
                self.positions[self.site_b(m, n)] = r + B_OFFSET
        self.bonds = []
        for m in range(L):
            for n in range(L):
                b = self.site_b(m, n)
                cell = m * L + n
                targets = (
                    self.site_a(m, n),
                    self.site_a(m + 1, n),
                    self.site_a(m, n + 1),
                )
                # bond colors: d=0 -> (m-n+2), d=1 -> (m-n+1), d=2 -> (m-n)
                for d, a in enumerate(targets):
                    color = (m - n + 2 - d) % 3
                    self.bonds.append(Bond(3 * cell + d, a, b, color))
        self.plaquettes = []
        for m in range(L):
            for n in range(L):
                color = (m - n) % 3
                sites = (
                    self.site_a(m, n),
                    self.site_b(m, n),
                    self.site_a(m + 1, n),
                    self.site_b(m + 1, n - 1),
                    self.site_a(m + 1, n - 1),
                    self.site_b(m, n - 1),
                )
                bonds = (
                    self.bond_id(m, n, 0),
                    self.bond_id(m, n, 1),
                    self.bond_id(m + 1, n - 1, 2),
                    self.bond_id(m + 1, n - 1, 0),
                    self.bond_id(m, n - 1, 1),
                    self.bond_id(m, n - 1, 2),
                )
                self.plaquettes.append(Plaquette(m * L + n, color, bonds, sites))
        self.bond_a = np.array([b.site_a for b in self.bonds], dtype=np.intp)
        self.bond_b = np.array([b.site_b for b in self.bonds], dtype=np.intp)
        self.bond_color = np.array([b.color for b in self.bonds], dtype=np.int8)
        self.bonds_of_color = tuple(
            np.flatnonzero(self.bond_color == c) for c in range(3)
        )

    def site_a(self, m, n):
        return 2 * ((m % self.L) * self.L + (n % self.L))

    def site_b(self, m, n):
        return 2 * ((m % self.L) * self.L + (n % self.L)) + 1

    def bond_id(self, m, n, d):
        return 3 * ((m % self.L) * self.L + (n % self.L)) + d

    def plaquettes_of_color(self, color):
        return [p for p in self.plaquettes if p.color == color]

    def bond_plaquettes(self, bond_id):
        """The two plaquette ids containing a bond."""
        out = [p.id for p in self.plaquettes if bond_id in p.bonds]
        return out

    def min_image_distance(self, i, j):
        """Euclidean distance between sites i, j minimised over torus images."""
        d = self.positions[j] - self.positions[i]
        L = self.L
        best = np.inf
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                v = d + L * di * A1 + L * dj * A2
                best = min(best, float(np.hypot(v[0], v[1])))
        return best

    def distance_matrix(self):
        L = self.L
        pos = self.positions
        d = pos[None, :, :] - pos[:, None, :]
        best = np.full((self.n_sites, self.n_sites), np.inf)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                v = d + L * di * A1 + L * dj * A2
                np.minimum(best, np.hypot(v[..., 0], v[..., 1]), out=best)
        return best


@dataclass
class Graph:
    """Measurement graph: full lattices and small custom graphs share this view."""

    n_sites: int
    bond_a: np.ndarray
    bond_b: np.ndarray
    bond_color: np.ndarray  # used only to pick the Pauli basis per bond
    lattice: Lattice | None = None

    @property
    def n_bonds(self):
        return len(self.bond_a)


@dataclass
class Schedule:
    """Round-robin measurement schedule over a Graph.

    rounds[n] is the array of bond ids measured in round n; slot (bond, round)
    enumerates the L^2 (r+1) recorded outcomes.  For the honeycomb, round n
    measures color n % 3 and color 0 (R) is measured first and last.
    """

    graph: Graph
    rounds: list  # list of np.ndarray of bond ids
    slot_index: dict = field(default_factory=dict)  # (bond, round) -> flat slot
    windows: list = field(default_factory=list)  # (pair n, plaquette id, slots)

    def __post_init__(self):
        k = 0
        for n, bonds in enumerate(self.rounds):
            for b in bonds:
                self.slot_index[(int(b), n)] = k
                k += 1
        self.n_slots = k

    @property
    def n_rounds(self):
        return len(self.rounds)

    @property
    def r(self):
        return len(self.rounds) - 1

    def round_color(self, n):
        return n % 3


class ScheduleError(ValueError):
    pass


def build_lattice(L):
    """Construct the periodic Kekule honeycomb of linear size L."""
    return Lattice(L)


def build_schedule(lattice, r):
    """r+1 measurement rounds cycling R, G, B starting and ending on R."""
    if r < 3 or r % 3 != 0:
        raise ScheduleError(f"r must be a multiple of 3 and >= 3, got {r}")
    graph = Graph(
        lattice.n_sites,
        lattice.bond_a,
        lattice.bond_b,
        lattice.bond_color,
        lattice=lattice,
    )
    rounds = [np.sort(lattice.bonds_of_color[n % 3]) for n in range(r + 1)]
    sched = Schedule(graph, rounds)
    # flux windows: rounds (n, n+1) with colors (c, c') envelop plaquettes of
    # the third color; the 6 slots are that plaquette's boundary bonds, color-c
    # ones in round n and color-c' ones in round n+1.
    for n in range(r):
        c0, c1 = n % 3, (n + 1) % 3
        cw = 3 - c0 - c1
        for p in lattice.plaquettes:
            if p.color != cw:
                continue
            slots = []
            for b in p.bonds:
                col = lattice.bond_color[b]
                rnd = n if col == c0 else n + 1
                slots.append(sched.slot_index[(int(b), rnd)])
            sched.windows.append((n, p.id, tuple(slots)))
    return sched


def build_custom_graph(n_sites, bonds, rounds, colors=None):
    """Small explicit graph for oracle setups.

    bonds: list of (site_a, site_b); rounds: list of lists of bond ids, each
    round vertex-disjoint; colors: optional per-bond color index (default 0,
    i.e. every bond measured in the Z basis).
    """
    bonds = [tuple(b) for b in bonds]
    for a, b in bonds:
        if not (0 <= a < n_sites and 0 <= b < n_sites):
            raise LatticeError(f"bond ({a}, {b}) references missing site")
    if colors is None:
        colors = [0] * len(bonds)
    graph = Graph(
        n_sites,
        np.array([b[0] for b in bonds], dtype=np.intp),
        np.array([b[1] for b in bonds], dtype=np.intp),
        np.array(colors, dtype=np.int8),
    )
    round_arrays = []
    for rr in rounds:
        seen = set()
        for bid in rr:
            a, b = bonds[bid]
            if a in seen or b in seen:
                raise ScheduleError(f"round {rr} measures overlapping bonds")
            seen.update((a, b))
        round_arrays.append(np.asarray(sorted(rr), dtype=np.intp))
    return graph, Schedule(graph, round_arrays)


def bipartition(lattice):
    """Cylinder cut calibrated so the final-round R matching has exactly
    2L/3 dimers across it.

    Even L: the cut takes L/2 consecutive cell rows, |A| = N/2 exactly.
    Odd L: an exact half cut is impossible -- every site belongs to exactly
    one R dimer, so |A| = L^2 (odd) would force an odd crossing number while
    2L/3 is even.  The nearest equal-cylinder cut takes (L-1)/2 rows,
    |A| = L(L-1), and the calibration holds.
    """
    L = lattice.L
    rows = L // 2 if L % 2 == 0 else (L - 1) // 2
    in_a = np.zeros(lattice.n_sites, dtype=bool)
    for m in range(L):
        for n in range(rows):
            in_a[lattice.site_a(m, n)] = True
            in_a[lattice.site_b(m, n)] = True
    cut = Cut(in_a=in_a)
    crossings = r_crossings(lattice, cut)
    want = int(in_a.sum())
    expect = lattice.n_sites // 2 if L % 2 == 0 else L * (L - 1)
    if want != expect:
        raise LatticeError("cut does not produce the expected cylinder")
    if crossings != 2 * L // 3:
        raise LatticeError(
            f"cut calibration failed: {crossings} R crossings, want {2 * L // 3}"
        )
    return cut


def r_crossings(lattice, cut):
    """Number of R-colored bonds with endpoints on opposite sides of the cut."""
    mask = lattice.bond_color == 0
    a_side = cut.in_a[lattice.bond_a[mask]]
    b_side = cut.in_a[lattice.bond_b[mask]]
    return int(np.sum(a_side != b_side))
