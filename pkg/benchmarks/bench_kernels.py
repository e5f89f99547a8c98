"""Benchmark the compiled covariance kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from floqmc.kernels import _pure

try:
    from floqmc.kernels import _core
except ImportError:
    _core = None

from floqmc.circuit import MeasurementStrength, slot_arrays
from floqmc.lattice import build_lattice, build_schedule


def bench_backend(mod, sa, n_sites, tau, reps):
    net = np.ones(len(sa.bond), dtype=np.int8)
    G = np.zeros((n_sites, n_sites))
    t0 = time.perf_counter()
    for _ in range(reps):
        G[:] = 0.0
        mod.apply_slots(G, sa.a, sa.b, net, tau, 0, len(sa.bond))
    return (time.perf_counter() - t0) / reps


def main():
    print(f"{'L':>3} {'slots':>6} {'pure (ms)':>10} {'compiled (ms)':>14} {'speedup':>8}")
    for L in (3, 6, 9, 12):
        lattice = build_lattice(L)
        schedule = build_schedule(lattice, L)
        sa = slot_arrays(schedule)
        tau = MeasurementStrength(0.125 * np.pi).tau
        reps = max(2, 60 // L)
        tp = bench_backend(_pure, sa, lattice.n_sites, tau, reps)
        if _core is not None:
            tc = bench_backend(_core, sa, lattice.n_sites, tau, reps)
            print(f"{L:>3} {len(sa.bond):>6} {tp*1e3:>10.2f} {tc*1e3:>14.2f} "
                  f"{tp/tc:>8.1f}x")
        else:
            print(f"{L:>3} {len(sa.bond):>6} {tp*1e3:>10.2f} {'n/a':>14}")


if __name__ == "__main__":
    main()
