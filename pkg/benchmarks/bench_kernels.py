"""Compare the numba and pure-numpy kernel backends on one 2D-PT workload.

    python3 benchmarks/bench_kernels.py --n 16 --sweeps 2000

Both backends consume the same random streams, so the traces must agree
exactly; the script checks that before printing timings.
"""
import argparse
import time

import numpy as np

from tempergrid.constraints import min_degree_cap, sparsify
from tempergrid.engine import RunConfig, run_2dpt
from tempergrid.instances import WishartSpec, generate_wishart
from tempergrid.kernels import BACKENDS
from tempergrid.schedule import Schedule


def workload(n, rows, cols):
    inst = generate_wishart(WishartSpec(n, 0.75, 1))
    prob, _ = sparsify(inst.model, 3, min_degree_cap(inst.model, 3))
    sched = Schedule(np.linspace(0.5, 3.0, rows), np.linspace(0.5, 3.0, cols))
    return prob, sched


def timed(prob, sched, cfg, name, repeats):
    best, trace = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        trace = run_2dpt(prob, sched, cfg, threads=1, backend_name=name)
        best = min(best, time.perf_counter() - t0)
    return best, trace


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=16, help="logical Wishart size")
    ap.add_argument("--rows", type=int, default=6)
    ap.add_argument("--cols", type=int, default=4)
    ap.add_argument("--sweeps", type=int, default=2000)
    ap.add_argument("--sweeps-per-swap", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    prob, sched = workload(args.n, args.rows, args.cols)
    cfg = RunConfig(args.sweeps, args.sweeps_per_swap, seed=1)
    if "numba" in BACKENDS:  # compile outside the timed region
        run_2dpt(prob, sched, RunConfig(args.sweeps_per_swap, args.sweeps_per_swap), backend_name="numba")
    flips = args.sweeps * prob.n_spins * args.rows * args.cols
    print(f"{prob.n_spins} physical spins, {args.rows}x{args.cols} grid, {args.sweeps} sweeps")
    results = {}
    for name in sorted(BACKENDS):
        secs, trace = timed(prob, sched, cfg, name, args.repeats)
        results[name] = (secs, trace)
        print(f"{name:>6}: {secs:8.3f} s  {flips / secs / 1e6:8.2f} M flip attempts/s")
    if len(results) == 2:
        (a, ta), (b, tb) = results["numba"], results["numpy"]
        same = np.array_equal(ta.states, tb.states) and np.array_equal(ta.acc_p, tb.acc_p)
        print(f"traces identical: {same}; numba speedup x{b / a:.1f}")
        return 0 if same else 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
