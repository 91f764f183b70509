"""Compare the compiled and pure-Python integrator backends.

Usage::

    python benchmarks/bench_kernels.py [--t-end 200] [--repeat 3] [--json out.json]

Each scenario is integrated with both backends; the table reports the best
wall time of ``--repeat`` runs, the speedup and the largest difference in the
final state.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from chemclock.integrator import IntegratorConfig, available_backends, integrate
from chemclock.scenarios import PRESETS, build_system


def _time(fn, repeat: int):
    best, result = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t)
    return best, result


def bench(preset: str, t_end: float | None, repeat: int, python_repeat: int = 1) -> dict:
    cfg = PRESETS[preset].config()
    system = build_system(cfg)
    t_span = (cfg["t_span"][0], t_end if t_end else cfg["t_span"][1])
    icfg = IntegratorConfig()
    row = {"preset": preset, "n": system.odes.n, "t_span": list(t_span)}
    runs = {}
    for backend in available_backends():
        reps = repeat if backend == "compiled" else python_repeat
        secs, traj = _time(lambda: integrate(system.odes, system.x0, t_span, icfg, backend=backend), reps)
        runs[backend] = traj
        row[f"{backend}_s"] = secs
        row[f"{backend}_steps"] = traj.stats.n_accepted
    if len(runs) == 2:
        row["speedup"] = row["python_s"] / row["compiled_s"]
        row["max_final_diff"] = float(np.max(np.abs(runs["compiled"].final - runs["python"].final)))
    return row


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--presets", nargs="+", default=["example_3_2", "example_3_3", "counter"])
    parser.add_argument("--t-end", type=float, default=None, help="override the end time of every preset")
    parser.add_argument("--repeat", type=int, default=3, help="repeats for the compiled backend")
    parser.add_argument("--python-repeat", type=int, default=1, help="repeats for the Python backend")
    parser.add_argument("--json", help="also write rows as JSON")
    args = parser.parse_args(argv)

    if "compiled" not in available_backends():
        print("compiled backend not built; only timing the Python backend", file=sys.stderr)
    rows = [bench(p, args.t_end, args.repeat, args.python_repeat) for p in args.presets]
    print(f"{'preset':12s} {'n':>2s} {'steps':>7s} {'compiled[s]':>12s} {'python[s]':>10s} "
          f"{'speedup':>8s} {'max|dy|':>9s}")
    for r in rows:
        print(f"{r['preset']:12s} {r['n']:2d} {r['python_steps']:7d} {r.get('compiled_s', float('nan')):12.4f} "
              f"{r['python_s']:10.3f} {r.get('speedup', float('nan')):8.1f} {r.get('max_final_diff', float('nan')):9.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
