"""Compare the compiled and pure-Python Sinkhorn kernels.

Run with ``python3 benchmarks/bench_kernels.py [--sizes 64 256 512] [--repeat 5]``.
Prints the best-of-``repeat`` wall time per call and the speed-up for each
size, plus the largest disagreement between the two backends' outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ufgw._kernels import BACKENDS


KERNELS = ("log", "plain", "stab")


def _problem(n, rng):
    G = rng.uniform(0.0, 1.0, size=(n, n))
    mu = np.full(n, 1.0 / n)
    return G, mu


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def run(sizes, repeat, iters, eps=0.05, rho=0.1):
    rng = np.random.default_rng(0)
    fi = rho / (rho + eps)
    rows = []
    for n in sizes:
        G, mu = _problem(n, rng)
        K = np.exp(-G / 0.5)
        results = {}
        for name, mod in sorted(BACKENDS.items()):
            t_log, out_log = _time(lambda: mod.sinkhorn_log(G, np.log(mu), np.log(mu), eps, fi, iters, 0.0,
                                                            np.zeros(n), np.zeros(n)), repeat)
            t_plain, out_plain = _time(lambda: mod.sinkhorn_plain(K, mu, mu, fi, iters, 0.0,
                                                                  np.ones(n), np.ones(n)), repeat)
            t_stab, out_stab = _time(lambda: mod.sinkhorn_stabilized(G, np.log(mu), np.log(mu), eps, fi, iters, 0.0,
                                                                     np.zeros(n), np.zeros(n)), repeat)
            results[name] = (t_log, t_plain, t_stab, out_log, out_plain, out_stab)
        rows.append((n, results))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 256, 512])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--iters", type=int, default=20)
    args = ap.parse_args(argv)
    if "compiled" not in BACKENDS:
        print("compiled backend not built; timing the python backend only")
    print(f"{'n':>6} {'kernel':>6} {'backend':>9} {'ms/call':>10} {'speed-up':>9}")
    for n, results in run(args.sizes, args.repeat, args.iters):
        for k, kernel in enumerate(KERNELS):
            base = results["python"][k]
            for name in sorted(results):
                t = results[name][k]
                print(f"{n:>6} {kernel:>6} {name:>9} {1e3 * t:>10.3f} {base / t:>8.2f}x")
        if "compiled" in results:
            for k, kernel in enumerate(KERNELS):
                py, c = results["python"][3 + k], results["compiled"][3 + k]
                diff = max(np.max(np.abs(a - b)) for a, b in zip(py[:2], c[:2]))
                print(f"{'':>6} {kernel:>6} max scaling difference between backends: {diff:.2e}")


if __name__ == "__main__":
    main()
