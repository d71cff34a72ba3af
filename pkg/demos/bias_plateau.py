"""Restricted maps keep improving with N; entropic maps stall.

For each sample size the demo fits

* the input-convex network (restricted potential), and
* entropic OT with a fixed epsilon followed by the barycentric projection,

on the canonical fixture and measures the map error against the known
optimal map. With fixed epsilon the entropic map converges to a blurred
version of the true map, so its error levels off at a bias floor while the
restricted estimate keeps decreasing.

This is a reduced version of ``w2restrict benchmark`` (two seeds instead of
five). Run with ``python demos/bias_plateau.py`` (about 1-2 minutes).
"""

import warnings

import numpy as np

from w2restrict.cli import resolve_config, run_benchmark
from w2restrict.errors import SolverQualityWarning

cfg = resolve_config(
    "benchmark",
    {"n_values": [250, 500, 1000], "seeds": 2, "methods": ["restricted_icnn", "sinkhorn_barycentric"]},
)


def progress(row):
    print(f"  {row['method']:<22} N={row['N']:<5} seed={row['seed']}  map error {row['map_error']:.4f}")


with warnings.catch_warnings():
    warnings.simplefilter("ignore", SolverQualityWarning)
    rows = run_benchmark(cfg, progress=progress)

print()
print(f"{'N':>6} {'network':>10} {'sinkhorn':>10}   (median map error)")
for n in cfg["n_values"]:
    med = {
        m: np.median([r["map_error"] for r in rows if r["method"] == m and r["N"] == n])
        for m in ("restricted_icnn", "sinkhorn_barycentric")
    }
    print(f"{n:>6} {med['restricted_icnn']:>10.4f} {med['sinkhorn_barycentric']:>10.4f}")
