"""Compiled versus numpy element kernels.

Times the fused p-energy/gradient kernel on square meshes and one full
p = 3 cell solve per backend, and checks that both backends agree.

    python3 benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 5] [--json out.json]
"""

import argparse
import json
import time
import warnings

import numpy as np

from degenhom import kernels
from degenhom.cell import cell_dirichlet
from degenhom.fields import CoefficientField, Discrete
from degenhom.integrands import Integrand
from degenhom.mesh import Mesh
from degenhom.solver import NonConvergence


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_case(n, p, repeat, rng):
    mesh = Mesh.cube(1.0, n, 2)
    u = rng.standard_normal((mesh.n_nodes, 1))
    A = rng.uniform(1.0, 2.0, size=(mesh.conn.shape[0], 2))
    Lam = rng.uniform(0.0, 1.0, size=mesh.conn.shape[0])
    args = (mesh.conn, mesh.etype, mesh.gref, u, A, Lam, mesh.vol, p, 1.0, 0.0, 1.0)
    out = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        out[name] = (best_of(lambda: kernels.power_energy_grad(*args), repeat), kernels.power_energy_grad(*args))
    return mesh.conn.shape[0], out


def solve_case(t, n, repeat):
    field = CoefficientField("checkerboard", 2, diag_weights=(Discrete((1.0, 2.0), (0.5, 0.5)),))
    f = Integrand(p=3.0)
    xi = np.array([[1.0, 0.5]])
    out = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        res = []
        out[name] = (best_of(lambda: res.append(cell_dirichlet(xi, field, 0, t, n, f)), repeat), res[-1].mu_hat)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="also write the results here")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    start = kernels.BACKEND
    rng = np.random.default_rng(0)
    rows = []
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':>22} " + " ".join(f"{b:>10}" for b in backends) + "   speedup  max|diff|")
    for n in args.sizes:
        n_el, res = kernel_case(n, args.p, args.repeat, rng)
        t = {b: res[b][0] for b in backends}
        diff = 0.0
        if len(backends) == 2:
            (e0, g0), (e1, g1) = res["python"][1], res["cython"][1]
            diff = max(abs(e0 - e1) / abs(e0), float(np.abs(g0 - g1).max() / np.abs(g0).max()))
        rows.append({"case": f"energy_grad n={n}", "n_el": n_el, "seconds": t, "rel_diff": diff})
        speed = t["python"] / t["cython"] if "cython" in t else 1.0
        print(f"{'energy_grad n=' + str(n):>22} " + " ".join(f"{t[b]:10.4f}" for b in backends)
              + f"   {speed:7.2f}  {diff:.1e}")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergence)
        res = solve_case(8.0, 64, max(1, args.repeat // 2))
    t = {b: res[b][0] for b in backends}
    mu = [res[b][1] for b in backends]
    diff = (max(mu) - min(mu)) / abs(mu[0])
    rows.append({"case": "cell solve t=8 n=64 p=3", "seconds": t, "rel_diff": diff})
    speed = t["python"] / t["cython"] if "cython" in t else 1.0
    print(f"{'cell solve p=3':>22} " + " ".join(f"{t[b]:10.4f}" for b in backends) + f"   {speed:7.2f}  {diff:.1e}")

    kernels.use_backend(start)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"backends": backends, "rows": rows}, fh, indent=2)
    return rows


if __name__ == "__main__":
    main()
