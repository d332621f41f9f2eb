"""Compiled vs pure-Python kernels on the two hot paths: M_r^{-1} and CG.

    python benchmarks/bench_kernels.py [--points 2000] [--n 2048] [--repeat 3]
"""

import argparse
import time

import numpy as np

from kirchhoff import kernels
from kirchhoff.linalg import assemble_laplacian, cg_solve
from kirchhoff.mesh import Mesh
from kirchhoff.model import CoefficientModel, PrimitiveMap


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_invert(backend, points, repeat):
    cm = CoefficientModel.family("poly", p=1.0)  # no closed form: quadrature + Newton path
    s = np.linspace(-20.0, 20.0, points)

    def run():
        # fresh map each time so knot construction is timed too
        return PrimitiveMap(cm, 1.0, 1e-10, backend=backend).invert(s)

    return best_of(run, repeat)


def bench_cg(backend, n, repeat):
    mesh = Mesh(1, n=n)
    A = assemble_laplacian(mesh)
    b = 1.0 + np.exp(mesh.axes[0])  # not an eigenvector, so CG runs its full course
    return best_of(lambda: cg_solve(A, b, tol=1e-10, backend=backend).x, repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--n", type=int, default=2048)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    names = kernels.available()
    print(f"backends: {', '.join(names)} (active: {kernels.BACKEND})")
    rows = {}
    for name in names:
        rows[name] = (bench_invert(name, args.points, args.repeat), bench_cg(name, args.n, args.repeat))
    print(f"{'kernel':<24}{'backend':<10}{'seconds':>12}{'speedup':>10}")
    ref = rows["python"]
    for label, i in ((f"invert x{args.points}", 0), (f"cg n={args.n}", 1)):
        for name in names:
            t = rows[name][i][0]
            print(f"{label:<24}{name:<10}{t:>12.4f}{ref[i][0] / t:>10.1f}")
    if "compiled" in rows:
        for label, i in (("invert", 0), ("cg", 1)):
            gap = float(np.max(np.abs(rows["compiled"][i][1] - ref[i][1])))
            print(f"max |compiled - python| {label}: {gap:.2e}")


if __name__ == "__main__":
    main()
