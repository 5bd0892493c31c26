#!/usr/bin/env python3
"""Compare the numba and numpy kernel backends on realistic scan shapes.

Times the two hot kernels (row smoothing, free-space counting) and the whole
scan -> descriptor pipeline at the sizes that matter: a full-resolution
maritime radar frame (400 x 3360) and a small synthetic frame (128 x 256).

Usage: python3 benchmarks/backend_bench.py [--repeats N] [--json PATH]
"""

import argparse
import json
import sys
import time

import numpy as np

from referee import kernels
from referee.descriptor import make_referee
from referee.features import FeatureParams, extract_features
from referee.scan_io import PolarScan

SHAPES = ((400, 3360), (128, 256))


def _time(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backends(repeats):
    if kernels.smooth_rows_numba is None:
        print("numba is not importable; nothing to compare", file=sys.stderr)
        return None

    rng = np.random.default_rng(0)
    rows = {}
    for h, w in SHAPES:
        x = rng.random((h, w)) * 255.0
        mask = (rng.random((h, w)) < 0.1).astype(np.uint8)

        # first call pays JIT compilation; keep it out of the timings
        kernels.smooth_rows_numba(x[:2], 17.0)
        kernels.farthest_and_free_numba(mask[:2])

        smooth_nb = _time(kernels.smooth_rows_numba, x, 17.0, repeats=repeats)
        smooth_np = _time(kernels.smooth_rows_numpy, x, 17.0, repeats=repeats)
        ff_nb = _time(kernels.farthest_and_free_numba, mask, repeats=repeats)
        ff_np = _time(kernels.farthest_and_free_numpy, mask, repeats=repeats)

        a_last, a_free = kernels.farthest_and_free_numba(mask)
        b_last, b_free = kernels.farthest_and_free_numpy(mask)
        assert np.array_equal(a_last, b_last) and np.array_equal(a_free, b_free)
        s_nb = kernels.smooth_rows_numba(x, 17.0)
        s_np = kernels.smooth_rows_numpy(x, 17.0)
        assert np.allclose(s_nb, s_np, rtol=1e-10, atol=1e-12)

        scan = PolarScan(scan_id=0, timestamp=0, intensities=x,
                         range_resolution=0.06)
        alpha = h // 8
        params = FeatureParams()

        def pipeline():
            make_referee(extract_features(scan, params), alpha)

        pipe = _time(pipeline, repeats=repeats)

        rows[f"{h}x{w}"] = {
            "smooth_rows_numba_s": smooth_nb,
            "smooth_rows_numpy_s": smooth_np,
            "smooth_speedup": smooth_np / smooth_nb,
            "farthest_and_free_numba_s": ff_nb,
            "farthest_and_free_numpy_s": ff_np,
            "farthest_speedup": ff_np / ff_nb,
            "pipeline_active_backend_s": pipe,
        }
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repetitions per kernel (min is kept)")
    ap.add_argument("--json", help="also dump the numbers to this path")
    args = ap.parse_args(argv)

    rows = bench_backends(args.repeats)
    if rows is None:
        return 1

    print(f"active backend: {kernels.BACKEND}")
    for shape, r in rows.items():
        print(f"\n{shape}")
        print(f"  smooth_rows        numba {r['smooth_rows_numba_s'] * 1e3:8.2f} ms"
              f"   numpy {r['smooth_rows_numpy_s'] * 1e3:8.2f} ms"
              f"   x{r['smooth_speedup']:.1f}")
        print(f"  farthest_and_free  numba {r['farthest_and_free_numba_s'] * 1e3:8.2f} ms"
              f"   numpy {r['farthest_and_free_numpy_s'] * 1e3:8.2f} ms"
              f"   x{r['farthest_speedup']:.1f}")
        print(f"  scan -> descriptor ({kernels.BACKEND})"
              f" {r['pipeline_active_backend_s'] * 1e3:8.2f} ms")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"backend": kernels.BACKEND, "shapes": rows}, fh, indent=2)
            fh.write("\n")
        print(f"\nwrote {args.json}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
