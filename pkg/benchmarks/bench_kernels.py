"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each row reports the best wall time per call for both backends, the
speed-up, and the largest difference between their outputs relative to
the output scale.
"""

import argparse
import time

import numpy as np

from pxsym import kernels
from pxsym.diagnostics import self_cell_weight
from pxsym.grid import build_grid
from pxsym.polarization import HalfSpaceSequence, _flatten_pairs


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_corner(n, repeat):
    g = build_grid("disk", n)
    rng = np.random.default_rng(0)
    u = np.where(g.mask, rng.normal(size=g.shape), 0.0)
    p = 2.0 + 0.5 * g.radius ** 2
    mu = np.ones(g.shape)
    res = {}
    for b in ("cython", "python"):
        res[b] = best_time(lambda: kernels.corner_energy(u, p, mu, g.spacing, True, backend=b), repeat)
    (ec, gc), (ep, gp) = res["cython"][1], res["python"][1]
    diff = max(abs(ec - ep) / abs(ep), float(np.abs(gc - gp).max() / np.abs(gp).max()))
    return f"corner_energy disk {n}", res["cython"][0], res["python"][0], diff


def bench_exchange(n, repeat):
    g = build_grid("disk", n)
    seq = HalfSpaceSequence.lattice(g, axis=(1.0, 0.0))
    hi, lo, starts = _flatten_pairs(seq)
    rng = np.random.default_rng(1)
    base = np.where(g.mask, rng.normal(size=g.shape), 0.0).ravel()
    res = {}
    for b in ("cython", "python"):
        def run():
            v = base.copy()
            kernels.compare_exchange_blocks(v, hi, lo, starts, backend=b)
            return v
        res[b] = best_time(run, repeat)
    diff = float(np.abs(res["cython"][1] - res["python"][1]).max())
    return f"lattice sweep disk {n}", res["cython"][0], res["python"][0], diff


def bench_riesz(n, repeat):
    g = build_grid("disk", n)
    m = g.mask
    pts = np.stack([c[m] for c in g.points], axis=1)
    rng = np.random.default_rng(2)
    vals = rng.uniform(size=pts.shape[0])
    alpha = np.full(pts.shape[0], 1.0)
    sw = self_cell_weight(g, alpha)
    res = {}
    for b in ("cython", "python"):
        res[b] = best_time(lambda: kernels.riesz_sum(pts, vals, alpha, sw, g.cell_volume, backend=b), repeat)
    diff = float(np.abs(res["cython"][1] - res["python"][1]).max() / np.abs(res["python"][1]).max())
    return f"riesz_sum disk {n}", res["cython"][0], res["python"][0], diff


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels._c is None:
        raise SystemExit("compiled extension not available; build with pip install -e . --no-build-isolation")
    rows = [bench_corner(129, args.repeat), bench_corner(257, args.repeat),
            bench_exchange(129, args.repeat), bench_exchange(257, args.repeat),
            bench_riesz(33, args.repeat), bench_riesz(65, args.repeat)]
    print(f"{'kernel':28s} {'cython [s]':>11s} {'python [s]':>11s} {'speed-up':>9s} {'rel. diff':>11s}")
    for name, tc, tp, diff in rows:
        print(f"{name:28s} {tc:11.5f} {tp:11.5f} {tp / tc:9.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
