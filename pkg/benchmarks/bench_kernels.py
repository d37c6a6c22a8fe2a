"""Compare the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--sizes 40x60,80x120,160x240]
"""

import argparse
import time

import numpy as np

from pwfit import kernels
from pwfit.formulation import compute_lambda
from pwfit.heuristic import KappaSchedule, init_node_params
from pwfit.instance_io import builtin_synthetic


def _time(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_size(m, n, impls):
    inst, _ = builtin_synthetic("quad", m, n, 0.002, seed=1)
    g = inst.graph
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2, g.num_edges).astype(np.uint8)

    params = compute_lambda(inst, 0.5)
    init = init_node_params(inst)
    ii = np.repeat(np.arange(m, dtype=np.float64), n)
    jj = np.tile(np.arange(n, dtype=np.float64), m)
    y0 = init.params.copy()
    y0[:, 2] = init.params[:, 0] * ii + init.params[:, 1] * jj \
        + init.params[:, 2]
    yflat = np.ascontiguousarray(inst.y.ravel())
    kappas = KappaSchedule.for_params(params).values()

    rows = []
    for kind, args in (("cc_labels", (m, n, x)),
                       ("fuse_regions", (m, n, yflat, y0, kappas))):
        times = {}
        outs = {}
        for name, mod in impls.items():
            fn = getattr(mod, kind)
            outs[name] = fn(*args)
            times[name] = _time(lambda: fn(*args))
        if len(outs) == 2:
            assert np.array_equal(outs["python"], outs["cython"]), \
                f"{kind} implementations disagree at {m}x{n}"
        rows.append((kind, times))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="20x30,40x60,80x120")
    args = ap.parse_args()

    impls = kernels.implementations()
    print(f"active implementation: {kernels.IMPLEMENTATION}")
    if "cython" not in impls:
        print("compiled kernels not built; benchmarking pure Python only")

    header = f"{'kernel':<14} {'size':<9}" + "".join(
        f" {name + ' (ms)':>14}" for name in impls) + "   speedup"
    print(header)
    print("-" * len(header))
    for size in args.sizes.split(","):
        m, n = (int(t) for t in size.lower().split("x"))
        for kind, times in bench_size(m, n, impls):
            line = f"{kind:<14} {size:<9}"
            for name in impls:
                line += f" {times[name] * 1e3:>14.3f}"
            if len(times) == 2:
                line += f"   {times['python'] / times['cython']:>6.1f}x"
            print(line)


if __name__ == "__main__":
    main()
