"""Compare the compiled and numpy backends of the hot kernels.

Run with ``python3 benchmarks/bench_kernels.py``; prints the best of
``--repeat`` wall times per kernel and input size, the speedup, and whether
the two backends agree.
"""

import argparse
import time

import numpy as np

from fractal_rd import _kernels_py, geometry, kernels, meshing


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    for gen in (2, 3, 4):
        poly = geometry.build_koch(gen)
        yield f"koch gen {gen}", poly
    poly = geometry.build_tree(0.55, 0.8, 1.2, np.pi / 4, 5)
    yield "tree gen 5", poly


def boundary_inputs(poly, levels=1):
    mesh = meshing.build_mesh(poly, levels)
    xy = mesh.nodes[mesh.bedges[:, 0]]
    lengths = mesh.bedge_lengths()
    mass = 0.5 * (lengths + np.roll(lengths, 1))
    minlen = np.minimum(lengths, np.roll(lengths, 1))
    return np.ascontiguousarray(xy), mass, minlen


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if "cython" not in kernels.BACKENDS:
        print("compiled backend not built; nothing to compare")
        return 1
    fast, slow = kernels.BACKENDS["cython"], _kernels_py
    print(f"{'kernel':<16}{'case':<14}{'size':>7}{'numpy s':>11}{'cython s':>11}{'speedup':>9}  agree")
    for name, poly in cases():
        xy = np.ascontiguousarray(poly.vertices)
        rows = [
            ("ear_clip", len(xy), lambda m: m.ear_clip(xy), lambda a, b: np.array_equal(a, b)),
            ("first_crossing", len(xy), lambda m: m.first_crossing(xy), lambda a, b: tuple(a) == tuple(b)),
        ]
        bxy, mass, minlen = boundary_inputs(poly)
        rows.append(("nonlocal_matrix", len(bxy), lambda m: m.nonlocal_matrix(bxy, mass, minlen, 0.5, 0.5),
                     lambda a, b: np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(a).max())))
        for kname, size, call, same in rows:
            ts, a = best_time(lambda: call(slow), args.repeat)
            tf, b = best_time(lambda: call(fast), args.repeat)
            print(f"{kname:<16}{name:<14}{size:>7}{ts:>11.4f}{tf:>11.4f}{ts / tf:>9.1f}  {same(a, b)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
