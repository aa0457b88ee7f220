"""Compare the compiled kernels with the numpy/scipy fallback.

Usage: python benchmarks/bench_kernels.py [--samples N] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from tdmcluster import _fallback, kernels
from tdmcluster.detection import design_filter_chain
from tdmcluster.modes import weight_function


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    x = rng.normal(0.0, np.sqrt(0.5), args.samples)
    sos = np.ascontiguousarray(design_filter_chain().sos)
    w = weight_function()
    offset, weights = w.window
    weights = np.ascontiguousarray(weights)
    count = (args.samples - offset - weights.size) // w.samples_per_slot

    backends = {"python": _fallback}
    try:
        from tdmcluster import _kernels
        backends["cython"] = _kernels
    except ImportError:
        print("compiled extension not built; timing the fallback only")

    ref_f = _fallback.sos_filter(sos, x)
    ref_s = _fallback.slot_sums(x, weights, offset, w.samples_per_slot, count)
    print(f"samples={args.samples} active backend={kernels.BACKEND}")
    print(f"{'kernel':<12}{'backend':<10}{'best ms':>10}{'Msamples/s':>14}{'max |diff|':>14}")
    for name, mod in backends.items():
        for kname, fn, ref in (
            ("sos_filter", lambda: mod.sos_filter(sos, x), ref_f),
            ("slot_sums", lambda: mod.slot_sums(x, weights, offset, w.samples_per_slot, count), ref_s),
        ):
            best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            diff = float(np.max(np.abs(fn() - ref)))
            print(f"{kname:<12}{name:<10}{best * 1e3:>10.2f}{args.samples / best / 1e6:>14.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
