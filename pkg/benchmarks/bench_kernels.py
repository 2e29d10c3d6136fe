"""Time the compiled ray/scoring kernels against the NumPy fallback.

Runs the two hot kernels on identical inputs from a generated world and
reports per-backend wall time plus speedup. Also asserts the outputs are
bit-identical, which is the contract that lets the backends be swapped
via AEROLOC_KERNELS without changing any result downstream.

Usage:
    python3 benchmarks/bench_kernels.py [--size 300] [--repeats 3]
"""

import argparse
import time

import numpy as np

from aeroloc.descriptor import DescriptorParams
from aeroloc.kernels import get_backend
from aeroloc.rays import ray_path_table
from aeroloc.sim import WorldSpec, generate_world


def best_of(fn, repeats):
    """Best wall time over repeats; returns (seconds, last result)."""
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=300, help="world side length in cells")
    ap.add_argument("--seed", type=int, default=0, help="world seed")
    ap.add_argument("--repeats", type=int, default=3, help="timing repeats, best kept")
    args = ap.parse_args()

    amap, _ = generate_world(WorldSpec(args.size, args.size, seed=args.seed))
    params = DescriptorParams()
    cells = np.ascontiguousarray(amap.traversable_cells(), dtype=np.int64)
    obstacle = np.ascontiguousarray(amap.obstacle.view(np.uint8))
    semantic = np.ascontiguousarray(amap.semantic)
    table = ray_path_table(params.angles(), params.max_range, amap.resolution)
    max_range = np.float32(params.max_range)

    backends = {"python": get_backend("python")}
    try:
        backends["native"] = get_backend("native")
    except ImportError:
        print("native extension not built; timing the python backend only")

    print(f"world {args.size}x{args.size} seed {args.seed}: "
          f"{cells.shape[0]} traversable cells, {params.n_lines} rays/descriptor")

    cast_times, cast_outs = {}, {}
    for name, mod in backends.items():
        cast_times[name], cast_outs[name] = best_of(
            lambda mod=mod: mod.cast_rays(obstacle, semantic, cells,
                                          table.dx, table.dy, table.dist,
                                          table.starts, max_range),
            args.repeats)

    # one ground descriptor (a cache row works: same layout, full coverage)
    ranges, labels = cast_outs["python"]
    j = int(np.argmax((labels != 255).sum(axis=1)))  # row with the most labels
    v = int(np.count_nonzero(labels[j] != 255))
    gamma = params.n_lines / v if v > 0 else 0.0

    score_times, score_outs = {}, {}
    for name, mod in backends.items():
        score_times[name], score_outs[name] = best_of(
            lambda mod=mod: mod.score_rotations(ranges[j], labels[j],
                                                ranges, labels,
                                                np.float32(params.range_tolerance),
                                                float(gamma)),
            args.repeats)

    print()
    print(f"{'kernel':<18}{'python':>12}{'native':>12}{'speedup':>10}")
    for kernel, times in (("cast_rays", cast_times), ("score_rotations", score_times)):
        py = times["python"]
        if "native" in times:
            nat = times["native"]
            print(f"{kernel:<18}{py:>10.3f} s{nat:>10.3f} s{py / nat:>9.1f}x")
        else:
            print(f"{kernel:<18}{py:>10.3f} s{'-':>12}{'-':>10}")

    if "native" in backends:
        r_py, l_py = cast_outs["python"]
        r_nat, l_nat = cast_outs["native"]
        same_cast = np.array_equal(r_py, r_nat) and np.array_equal(l_py, l_nat)
        s_py, b_py = score_outs["python"]
        s_nat, b_nat = score_outs["native"]
        same_score = np.array_equal(s_py, s_nat) and np.array_equal(b_py, b_nat)
        print()
        if same_cast and same_score:
            print("backends agree bit-for-bit on both kernels")
        else:
            raise SystemExit("BACKEND MISMATCH: "
                             f"cast_rays equal={same_cast}, score_rotations equal={same_score}")


if __name__ == "__main__":
    main()
