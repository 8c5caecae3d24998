"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--width 816 --height 684]

Warps a 24-band VNIR-sized cube onto the RGB grid and finds the largest
valid rectangle of a ragged mask, timing each backend and checking that
their outputs are bit-identical.
"""

import argparse
import time

import numpy as np

from hyperfuel.geometry import Homography
from hyperfuel.kernels import available_backends


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--width", type=int, default=816)
    ap.add_argument("--height", type=int, default=684)
    ap.add_argument("--bands", type=int, default=24)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rect-size", type=int, default=256, help="side of the mask for the rectangle kernel")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    sw, sh = args.width // 2 + 4, args.height // 2 + 4
    src = rng.random((args.bands, sh, sw), dtype=np.float32)
    hinv = Homography.affine(2.0, 2.0, -6.0, -5.0).inverse().h
    mask = (rng.random((args.rect_size, args.rect_size)) > 0.02).astype(np.uint8)

    backends = available_backends()
    results = {}
    print(f"warp: {args.bands} bands {sw}x{sh} -> {args.width}x{args.height}; "
          f"rectangle: {args.rect_size}x{args.rect_size} mask; best of {args.repeat}")
    for name, mod in backends.items():
        tw, warped = best_of(lambda: mod.warp_bilinear(src, hinv, args.height, args.width), args.repeat)
        tr, rect = best_of(lambda: mod.max_rectangle(mask), args.repeat)
        results[name] = (tw, tr, warped, rect)
        print(f"  {name:9s} warp {tw * 1e3:9.2f} ms   max_rectangle {tr * 1e3:9.2f} ms")

    if "compiled" in results:
        cw, cr = results["compiled"][:2]
        pw, pr = results["python"][:2]
        print(f"  speed-up  warp {pw / cw:8.1f}x      max_rectangle {pr / cr:8.1f}x")
        a, b = results["compiled"][2], results["python"][2]
        same = (np.array_equal(a[0], b[0], equal_nan=True) and np.array_equal(a[1], b[1])
                and results["compiled"][3] == results["python"][3])
        print(f"  outputs bit-identical: {same}")
    else:
        print("  compiled backend not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
