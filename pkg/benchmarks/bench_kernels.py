"""Compare the numba and numpy kernel paths.

Times the dense simplex on random feasibility LPs, the fused ReLU layer on
a grid batch, and a full traversal run in a subprocess per backend (the
backend is fixed at import time by POLYTRAVERSE_DISABLE_JIT).

    python benchmarks/bench_kernels.py --lps 2000 --grid 200000
"""
import argparse
import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from polytraverse import _kernels, random_network, save_network
from polytraverse.lp import _PIVOT_TOL


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_simplex(n_lps, seed, repeat):
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(n_lps):
        m, k = int(rng.integers(4, 30)), int(rng.integers(2, 8))
        A = rng.normal(size=(m, k))
        cases.append((A, A @ rng.normal(size=k) + rng.uniform(0, 1, m), rng.normal(size=k)))

    def run(kernel):
        for A, b, c in cases:
            kernel(A, b, c, 50 * sum(A.shape) + 1000, _PIVOT_TOL, 1e-9)

    out = {"numpy": _best_of(lambda: run(_kernels.simplex_numpy), repeat)}
    if _kernels.HAVE_NUMBA:
        run(_kernels.simplex_numba)          # compile outside the timing
        out["numba"] = _best_of(lambda: run(_kernels.simplex_numba), repeat)
    return out


def bench_relu(n_points, seed, repeat):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(n_points, 4))
    W, b = rng.normal(size=(50, 4)), rng.normal(size=50)
    out = {"numpy": _best_of(lambda: _kernels.relu_layer_numpy(H, W, b), repeat)}
    if _kernels.HAVE_NUMBA:
        _kernels.relu_layer_numba(H[:10], W, b)
        out["numba"] = _best_of(lambda: _kernels.relu_layer_numba(H, W, b), repeat)
    return out


def bench_traversal(seed, widths):
    net = random_network(np.random.default_rng(seed), 3, widths)
    region = json.dumps({"type": "box", "lower": [-1] * 3, "upper": [1] * 3})
    out = {}
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "net.json")
        with open(path, "w") as fh:
            fh.write(save_network(net))
        for name, flag in (("numpy", "1"), ("numba", "0")):
            env = {**os.environ, "POLYTRAVERSE_DISABLE_JIT": flag}
            cmd = [sys.executable, "-m", "polytraverse", "traverse", "--net", path, "--region", region]
            subprocess.run(cmd, env=env, capture_output=True, check=True)   # warm the numba cache
            rep = json.loads(subprocess.run(cmd, env=env, capture_output=True, text=True, check=True).stdout)
            out[name] = rep["stats"]["wall_time"]
            out[f"{name}_polytopes"] = rep["stats"]["polytopes_visited"]
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lps", type=int, default=1000)
    ap.add_argument("--grid", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--widths", default="10,8", help="hidden widths of the traversal benchmark net")
    args = ap.parse_args()

    rows = [("simplex x%d" % args.lps, bench_simplex(args.lps, args.seed, args.repeat)),
            ("relu_layer %d pts" % args.grid, bench_relu(args.grid, args.seed, args.repeat))]
    trav = bench_traversal(args.seed, [int(w) for w in args.widths.split(",")])
    rows.append((f"traverse ({trav['numba_polytopes']} polytopes)", trav))
    print(f"{'kernel':<32}{'numpy [s]':>12}{'numba [s]':>12}{'speed-up':>10}")
    for name, t in rows:
        nb = t.get("numba")
        speed = f"{t['numpy'] / nb:9.1f}x" if nb else "      n/a"
        print(f"{name:<32}{t['numpy']:>12.4f}{(nb or float('nan')):>12.4f}{speed:>10}")


if __name__ == "__main__":
    main()
