"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on the same inputs under both backends; outputs are
checked for equality before timings are reported.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from eigenmsa import _core
from eigenmsa.certify import _thresholds
from eigenmsa.lattice import Box, box_sites
from eigenmsa.model import SingleSiteDistribution, hamiltonian, sample_potential
from eigenmsa.spectral import eigensystem


def cases():
    region = box_sites(Box.centered(1, 200))
    H = hamiltonian(region, 1e-3, sample_potential(region, SingleSiteDistribution.uniform(0, 1), 0, 0))
    es = eigensystem(H)
    absv = np.abs(es.vectors)
    thr = _thresholds(region, 2.0, 14)

    rng = np.random.default_rng(0)
    n = 600
    mask = rng.random((n, n)) < 8 / n
    indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))]).astype(np.int64)
    indices = np.nonzero(mask)[1].astype(np.int64)

    trials = np.arange(256, dtype=np.int64)
    return {
        "counter_uniform (256 x 441)": lambda k: k.counter_uniform(7, trials, 441, 0),
        "localization_edges (201 sites)": lambda k: k.localization_edges(absv, thr),
        "hopcroft_karp (600 + 600, ~4800 edges)": lambda k: k.hopcroft_karp(n, n, indptr, indices),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", dest="json_path")
    args = ap.parse_args(argv)

    backends = _core.BACKENDS
    if "cython" not in backends:
        print("compiled extension not available; timing the fallback only", file=sys.stderr)
    results = []
    for name, fn in cases().items():
        outs = {b: fn(mod) for b, mod in backends.items()}
        ref = outs["python"]
        same = all(np.array_equal(ref, o) for o in outs.values())
        row = {"kernel": name, "identical": same}
        for b, mod in backends.items():
            number = 3
            t = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            row[b] = t
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        results.append(row)

    width = max(len(r["kernel"]) for r in results)
    print(f"{'kernel':<{width}}  {'python':>10}  {'cython':>10}  {'speedup':>8}  identical")
    for r in results:
        cy = f"{r['cython'] * 1e3:8.2f}ms" if "cython" in r else f"{'-':>10}"
        sp = f"{r['speedup']:7.1f}x" if "speedup" in r else f"{'-':>8}"
        print(f"{r['kernel']:<{width}}  {r['python'] * 1e3:8.2f}ms  {cy}  {sp}  {r['identical']}")
    if args.json_path:
        with open(args.json_path, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0 if all(r["identical"] for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
