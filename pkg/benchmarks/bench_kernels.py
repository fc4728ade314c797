"""Compare the compiled kernel extension against the numpy fallback.

Runs every kernel the extension accelerates on mesh-sized workloads and
reports best-of-N wall times for both backends side by side. The
compiled column is skipped (with a notice) when the extension is not
built, so the script also documents that the package works without it.

Usage:
    python3 benchmarks/bench_kernels.py [--h2 0.01] [--h3 0.0625] [--repeats 5]
"""

import argparse
import time

import numpy as np

from klab import femcore, geometry, report
from klab import mesh as meshmod
from klab.kernels import _fallback

try:
    from klab.kernels import _speedups
except ImportError:
    _speedups = None


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(h2, h3):
    """One workload per kernel, sized by the requested mesh spacings."""
    square = geometry.build_polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    lshape = geometry.build_polygon(geometry.L_SHAPE_VERTICES)
    box = geometry.build_polyhedron_3d("box")
    m2 = meshmod.build_mesh(square, h2)
    m3 = meshmod.build_mesh(box, h3)

    out = []
    for m, tag in ((m2, "2d"), (m3, "3d")):
        nodes = m.nodes
        elems = m.elements
        out.append((f"simplex_geometry {tag}", f"{len(elems)} elements",
                    "simplex_geometry", (nodes, elems)))
        vols, grads = _fallback.simplex_geometry(nodes, elems)
        out.append((f"local_stiffness {tag}", f"{len(elems)} elements",
                    "local_stiffness", (vols, grads)))
        rule = femcore.simplex_rule(m.dimension, 2)
        wvals = np.abs(np.sin(
            femcore.quadrature_points(m, rule)[..., 0])) + 0.5
        out.append((f"local_weighted_mass {tag}", f"{len(elems)} elements",
                    "local_weighted_mass",
                    (vols, rule.bary, rule.weights, wvals)))

    x = np.linspace(0.0, 1.0, 1_000_000)
    out.append(("neumaier_sum", "1e6 values", "neumaier_sum", (x,)))
    out.append(("neumaier_dot", "1e6 values", "neumaier_dot", (x, x[::-1])))

    rng = np.random.default_rng(0)
    pts3 = rng.random((200_000, 3))
    segs = box.singular_segments()
    out.append(("nearest_on_segments", f"{len(pts3)} pts x {len(segs)} edges",
                "nearest_on_segments",
                (pts3, np.ascontiguousarray(segs[:, 0]),
                 np.ascontiguousarray(segs[:, 1]))))
    pts2 = rng.random((200_000, 2))
    corners = np.asarray(lshape.vertices, dtype=float)
    out.append(("nearest_points", f"{len(pts2)} pts x {len(corners)} corners",
                "nearest_points", (pts2, corners)))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h2", type=float, default=0.01,
                    help="2D mesh spacing for the element kernels")
    ap.add_argument("--h3", type=float, default=0.0625,
                    help="3D mesh spacing for the element kernels")
    ap.add_argument("--repeats", type=int, default=5,
                    help="take the best of this many timed runs")
    args = ap.parse_args()

    if _speedups is None:
        print("compiled extension not built; timing the fallback only")
    header = ["kernel", "workload", "python ms", "compiled ms", "speedup"]
    rows = []
    for label, size, name, call_args in workloads(args.h2, args.h3):
        t_py = best_of(lambda: getattr(_fallback, name)(*call_args),
                       args.repeats)
        row = [label, size, round(1e3 * t_py, 3)]
        if _speedups is None:
            row += [None, None]
        else:
            t_c = best_of(lambda: getattr(_speedups, name)(*call_args),
                          args.repeats)
            row += [round(1e3 * t_c, 3), round(t_py / t_c, 2)]
        rows.append(row)
    print(report.render_table(header, rows))


if __name__ == "__main__":
    main()
