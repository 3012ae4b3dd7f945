"""Timing comparison of the numba and numpy projection backends.

Runs the batched columnwise k-sparse projections on growing problem sizes
with both backends (each in its own subprocess so the module-level backend
selection is exercised) and prints a small table.

Usage: python benchmarks/bench_backends.py
"""

import json
import os
import subprocess
import sys

SIZES = [(50, 50, 5), (200, 200, 10), (1000, 500, 20), (4000, 1000, 50)]
REPEATS = 5

WORKER = r"""
import json
import sys
import time

import numpy as np

from sparseot.backends import active_backend, ksparse_nonneg_columns, ksparse_simplex_columns

sizes = json.loads(sys.argv[1])
repeats = int(sys.argv[2])
rng = np.random.default_rng(0)
rows = []
for m, n, k in sizes:
    U = rng.normal(size=(m, n))
    b = rng.uniform(0.5, 1.5, size=n)
    ksparse_simplex_columns(U, b, k)  # warmup (jit compile)
    ksparse_nonneg_columns(U, k)
    t0 = time.perf_counter()
    for _ in range(repeats):
        ksparse_simplex_columns(U, b, k)
    t_simplex = (time.perf_counter() - t0) / repeats
    t0 = time.perf_counter()
    for _ in range(repeats):
        ksparse_nonneg_columns(U, k)
    t_nonneg = (time.perf_counter() - t0) / repeats
    rows.append({"m": m, "n": n, "k": k,
                 "simplex_ms": t_simplex * 1e3, "nonneg_ms": t_nonneg * 1e3})
print(json.dumps({"backend": active_backend(), "rows": rows}))
"""


def run_backend(backend):
    env = dict(os.environ, SPARSEOT_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", WORKER, json.dumps(SIZES), str(REPEATS)],
        env=env, capture_output=True, text=True,
    )
    if out.returncode != 0:
        print(f"backend {backend!r} unavailable:\n{out.stderr}", file=sys.stderr)
        return None
    return json.loads(out.stdout)


def main():
    results = {}
    for backend in ("numpy", "numba"):
        res = run_backend(backend)
        if res is not None:
            results[res["backend"]] = res["rows"]
    print(f"{'size (m x n, k)':<22}", end="")
    for backend in results:
        print(f"{backend + ' simplex':>16}{backend + ' nonneg':>16}", end="")
    print()
    for i, (m, n, k) in enumerate(SIZES):
        print(f"{f'{m} x {n}, k={k}':<22}", end="")
        for backend in results:
            row = results[backend][i]
            print(f"{row['simplex_ms']:>13.2f} ms{row['nonneg_ms']:>13.2f} ms", end="")
        print()
    if len(results) == 2:
        speedups = [results["numpy"][i]["simplex_ms"] / results["numba"][i]["simplex_ms"]
                    for i in range(len(SIZES))]
        print(f"\nnumba speedup on the simplex kernel: "
              f"{min(speedups):.2f}x - {max(speedups):.2f}x")


if __name__ == "__main__":
    main()
