"""Time the input-descent kernel: compiled backend vs numpy fallback.

    python3 benchmarks/bench_descent.py [--n 1000] [--epochs 200] [--repeat 3]

Uses an Adult-shaped network (104-32-16-2) with Glorot weights.  Prints one
line per backend plus the max abs difference between their outputs.
"""

import argparse
import json
import time

import numpy as np

from lucid import kernels
from lucid.inverse_design import sample_uniform_inputs
from lucid.nn_core import init_model


def bench(model, X0, epochs, lr, backend, repeat, workers=1):
    best = float("inf")
    out = None
    for _ in range(repeat):
        X = X0.copy()
        t0 = time.perf_counter()
        kernels.descend_rows(model, X, 1, lr, epochs, backend=backend, workers=workers)
        best = min(best, time.perf_counter() - t0)
        out = X
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--dims", default="104,32,16,2")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print results as JSON")
    args = ap.parse_args(argv)

    dims = tuple(int(d) for d in args.dims.split(","))
    model = init_model(dims, seed=0)
    X0 = sample_uniform_inputs(dims[0], args.n, seed=0)
    results = {}
    outputs = {}
    for backend in kernels.available_backends():
        t, outputs[backend] = bench(model, X0, args.epochs, 0.1, backend, args.repeat)
        steps = args.n * args.epochs
        results[backend] = {"seconds": t, "row_steps_per_second": steps / t}
    if len(outputs) == 2:
        results["max_abs_diff"] = float(np.abs(outputs["cython"] - outputs["python"]).max())
        results["speedup"] = results["python"]["seconds"] / results["cython"]["seconds"]

    if args.json:
        print(json.dumps(results, indent=2))
        return
    print(f"dims={dims} N={args.n} E={args.epochs} best of {args.repeat}")
    for b in kernels.available_backends():
        r = results[b]
        print(f"  {b:7s} {r['seconds']:8.3f} s  {r['row_steps_per_second']:12.0f} row-steps/s")
    if "speedup" in results:
        print(f"  speedup {results['speedup']:.2f}x, max |diff| {results['max_abs_diff']:.1e}")


if __name__ == "__main__":
    main()
