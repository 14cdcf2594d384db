"""Timing comparison of the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_backends.py [--sizes 800,1600,3200]

Both backends produce results agreeing to ~1e-12 (see the test suite); this
script only measures wall time per call on this machine.
"""

import argparse
import importlib
import time

import numpy as np


def load_backends():
    backends = {}
    try:
        backends["compiled"] = importlib.import_module("landau._backend._compiled")
    except ImportError:
        print("compiled extension not built; benchmarking the fallback only")
    backends["numpy"] = importlib.import_module("landau._backend._numpy")
    return backends


def time_call(fn, *args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="800,1600,3200",
                        help="comma-separated particle counts")
    parser.add_argument("--dims", default="3,10")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    dims = [int(s) for s in args.dims.split(",")]
    backends = load_backends()

    rng = np.random.default_rng(0)
    header = f"{'kernel':<28}{'n':>8}{'d':>4}" + "".join(
        f"{name + ' (s)':>16}" for name in backends
    ) + ("" if len(backends) < 2 else f"{'speedup':>10}")
    print(header)
    print("-" * len(header))

    for d in dims:
        for n in sizes:
            pos = rng.standard_normal((n, d))
            sc = rng.standard_normal((n, d))
            rows = {
                "velocity gamma=0": lambda b: b.velocity_pairwise(pos, sc, 0.0, 1.0),
                "velocity gamma=-3": lambda b: b.velocity_pairwise(pos, sc, -3.0, 1.0),
                "blob score": lambda b: b.blob_scores(pos, 0.3, 4e8),
                "kde (n queries)": lambda b: b.kde_sum(pos, pos),
            }
            for label, call in rows.items():
                times = {name: time_call(call, mod) for name, mod in backends.items()}
                line = f"{label:<28}{n:>8}{d:>4}" + "".join(
                    f"{times[name]:>16.4f}" for name in backends
                )
                if len(times) == 2:
                    line += f"{times['numpy'] / times['compiled']:>10.1f}x"
                print(line)

    # training elementwise kernels
    B = 38400
    Z = rng.standard_normal((B, 100))
    A = np.empty_like(Z)
    dZ = np.empty_like(Z)
    for name, mod in backends.items():
        t_fwd = time_call(lambda m=mod: m.softsign_forward(Z, A))
        t_bwd = time_call(lambda m=mod: m.softsign_backward(A, Z, dZ))
        print(f"softsign fwd+bwd ({B}x100) [{name}]: {t_fwd + t_bwd:.4f} s")


if __name__ == "__main__":
    main()
