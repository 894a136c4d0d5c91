"""Time the compiled and numpy kernel backends on reconstruction-sized inputs.

    python benchmarks/bench_kernels.py --size 128 --M 16 --radius 7
"""
import argparse
import time

import numpy as np

from tlmri import kernels
from tlmri.patches import PatchGeometry, aggregate_patches, block_match, extract_patches
from tlmri.phantom import smooth_blobs


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--patch-side", type=int, default=8)
    p.add_argument("--M", type=int, default=16)
    p.add_argument("--radius", type=int, default=7)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args(argv)

    geom = PatchGeometry(args.patch_side)
    img = smooth_blobs(args.size, seed=0)
    shape = img.shape
    X = extract_patches(img, geom)

    print(f"image {args.size}x{args.size}, {X.shape[1]} patches of length {X.shape[0]}")
    print(f"backends: {', '.join(kernels.available_backends())}")
    results = {}
    for name in kernels.available_backends():
        with kernels.use_backend(name):
            t_bm, bm = best_of(lambda: block_match(X, geom, shape, args.M, args.radius), args.repeats)
            t_sc, agg = best_of(lambda: aggregate_patches(X, geom, shape)[0], args.repeats)
        results[name] = (bm.groups, agg)
        print(f"{name:>7}  block_match {t_bm * 1e3:9.1f} ms   scatter_add {t_sc * 1e3:8.2f} ms")

    if len(results) > 1:
        (ga, aa), (gb, ab) = results.values()
        same = np.array_equal(ga, gb) and np.array_equal(aa, ab)
        print(f"outputs bit-identical across backends: {same}")


if __name__ == "__main__":
    main()
