"""Compare the compiled kernels with the numpy fallback on representative workloads.

    python benchmarks/bench_kernels.py [--repeat N] [--quick]

Prints best-of-N wall times per kernel and backend and the speedup.  The
outputs of the two backends are checked for agreement before timing.
"""
import argparse
import math
import sys
import timeit

import numpy as np

from hyplab import kernels
from hyplab.groups import preset


def workloads(quick: bool):
    g = preset("genus2-octagon")
    gens = np.array([h.m for h in g.side_pairings])
    alpha, beta = g.pairing_su11
    rng = np.random.default_rng(0)
    n_ode = 20_000 if quick else 200_000
    dt = 1e-3
    k_hyp = np.full(2 * n_ode + 1, -1.0)
    k_sph = np.full(2 * n_ode + 1, 1.0)
    n_pts = 2_000 if quick else 20_000
    r = np.sqrt(rng.random(n_pts)) * 0.995
    zs = r * np.exp(2j * math.pi * rng.random(n_pts))
    n_geo = 16 if quick else 64
    z0 = 0.3 * np.sqrt(rng.random(n_geo)) * np.exp(2j * math.pi * rng.random(n_geo))
    d0 = 2.0 * math.pi * rng.random(n_geo)
    steps = 1_000 if quick else 5_000
    radius = 9.0 if quick else 11.0
    flow = lambda n: (lambda k: k.flow_fold(alpha, beta, z0, d0, 1e-2, n, 30.0))  # noqa: E731
    # (timed call, agreement check); the folded flow is chaotic, so the backends
    # are compared up to t = 10 only, before rounding differences grow like e^t
    return {
        f"orbit_bfs (octagon, R={radius:g})": (lambda k: k.orbit_bfs(gens, g.inverse_of, radius, 1e-7, 5_000_000), None),
        f"jacobi_rk4 ({n_ode} steps)": (lambda k: k.jacobi_rk4(k_hyp, dt, 0.0, 1.0), None),
        f"riccati_rk4 ({n_ode} steps, poles)": (lambda k: k.riccati_rk4(k_sph, dt, 0.0), None),
        f"fold_points ({n_pts} points)": (lambda k: k.fold_points(alpha, beta, zs), None),
        f"flow_fold ({n_geo} x {steps} steps)": (flow(steps), flow(1_000)),
    }


def _agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    if a.dtype.kind in "fc":
        fin = np.isfinite(a) & np.isfinite(b)
        return bool(np.array_equal(np.isfinite(a), np.isfinite(b)) and np.allclose(a[fin], b[fin], rtol=1e-6, atol=1e-9))
    return bool(np.array_equal(a, b))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3, help="timing repetitions (best is reported)")
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args(argv)
    compiled = kernels.compiled_backend()
    if compiled is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    py = kernels.python_backend
    print(f"{'kernel':40s} {'compiled [s]':>13s} {'python [s]':>11s} {'speedup':>8s}  agree")
    for name, (fn, check) in workloads(args.quick).items():
        check = check or fn
        same = _agree(check(compiled), check(py))
        t_c = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat))
        t_p = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
        print(f"{name:40s} {t_c:13.4f} {t_p:11.4f} {t_p / t_c:8.1f}x  {'yes' if same else 'NO'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
