"""Command-line front end.

Commands::

    chemclock run --preset example_3_3 [--set p=2.5] [--config cfg.json] [--no-assert]
    chemclock emit-crn --preset example_5_2
    chemclock emit-crn --ode "X=(5 - Y)*X" --ode "Y=X - 2"
    chemclock sweep --preset example_3_3 --grid p=0.5,2.5,3.5
    chemclock list-presets

Exit codes: 0 success, 1 assertion failure, 2 config error, 3 integration failure.
Outputs go to ``--out``, else ``$CHEMCLOCK_OUTPUT_DIR``, else ``./chemclock-out``.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from pathlib import Path

from .crn import RealizabilityError, crn_from_polynomial_odes
from .integrator import IntegrationError
from .scenarios import (PRESETS, SWEEPS, ConfigError, assertions, build_system, check_sweep_expectations,
                        grid_points, inline_odes, integrator_config, load_config, parse_value, resolve_config,
                        to_json)
from .sequencer import Assertions, run_scenario

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_INTEGRATION = 0, 1, 2, 3
OUTPUT_ENV = "CHEMCLOCK_OUTPUT_DIR"


def atomic_write(path: Path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def output_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or "chemclock-out")


def _raw_config(args) -> dict:
    raw = load_config(args.config) if getattr(args, "config", None) else {}
    if getattr(args, "preset", None):
        if args.preset in SWEEPS and args.command == "sweep":
            raw = {**SWEEPS[args.preset], **raw}
        else:
            raw["preset"] = args.preset
    odes = getattr(args, "ode", None)
    if odes:
        eqs = {}
        for item in odes:
            if "=" not in item:
                raise ConfigError(f"--ode must look like NAME=EXPR, got {item!r}")
            name, expr = item.split("=", 1)
            eqs[name.strip()] = expr
        params = {}
        for item in getattr(args, "param", None) or []:
            k, _, v = item.partition("=")
            params[k.strip()] = float(parse_value(v))
        raw["system"] = {"variables": list(eqs), "equations": eqs, "params": params}
        raw.pop("preset", None)
    if getattr(args, "t_span", None):
        raw["t_span"] = list(args.t_span)
    if getattr(args, "name", None):
        raw["name"] = args.name
    return raw


def _emit_network(system, out: Path, name: str) -> tuple[Path, Path]:
    payload = {**system.network.to_dict(), "constants": dict(system.constants),
               "parameters": dict(system.params)}
    jpath, tpath = out / f"{name}.crn.json", out / f"{name}.crn.txt"
    atomic_write(jpath, to_json(payload) + "\n")
    atomic_write(tpath, system.network.to_text() + "\n")
    return jpath, tpath


def _realizability_message(err: RealizabilityError) -> str:
    lines = ["error: ODE system cannot be realized by mass-action reactions"]
    for v in err.report.violations:
        lines.append(f"  d{v.variable}/dt has negative term {v.term} without a factor {v.variable}")
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = resolve_config(_raw_config(args), args.set or [])
    system = build_system(cfg)
    icfg = integrator_config(cfg)
    checks = assertions(cfg)
    out = output_dir(args.out)
    name = cfg.get("name") or cfg.get("preset") or "scenario"
    try:
        result = run_scenario(system, cfg["t_span"], icfg, checks, backend=args.backend)
    except IntegrationError as err:
        summary = {"name": name, "error": str(err), "status": err.status}
        if err.partial is not None:
            atomic_write(out / f"{name}.csv", err.partial.to_csv())
        atomic_write(out / f"{name}.summary.json", to_json(summary) + "\n")
        print(f"integration failed: {err}", file=sys.stderr)
        return EXIT_INTEGRATION
    summary = {"name": name, "config": cfg, **result.summary}
    atomic_write(out / f"{name}.csv", result.trajectory.to_csv())
    atomic_write(out / f"{name}.summary.json", to_json(summary) + "\n")
    if args.emit_crn:
        _emit_network(system, out, name)
    for key, ok in result.verdicts.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {key}")
    print(f"wrote {out / (name + '.csv')} and {out / (name + '.summary.json')}")
    if args.no_assert or result.ok:
        return EXIT_OK
    return EXIT_ASSERT


def cmd_emit_crn(args) -> int:
    raw = _raw_config(args)
    cfg = resolve_config(raw, args.set or [])
    if cfg["kind"] == "custom":
        crn_from_polynomial_odes(inline_odes(cfg["system"]))  # realizability diagnostics
    system = build_system(cfg)
    name = cfg.get("name") or cfg.get("preset") or "custom"
    jpath, tpath = _emit_network(system, output_dir(args.out), name)
    if args.stdout:
        print(system.network.to_text())
    print(f"{len(system.network.reactions)} reactions written to {jpath} and {tpath}")
    return EXIT_OK


SWEEP_FIELDS = ("point", "params", "symmetric", "min_uv_mean", "T_low", "T_high", "ok", "error")


def cmd_sweep(args) -> int:
    raw = _raw_config(args)
    grid = dict(raw.pop("grid", {}) or {})
    expect = raw.pop("expect", {}) or {}
    for item in args.grid or []:
        key, _, values = item.partition("=")
        if not values:
            raise ConfigError(f"--grid must look like key=v1,v2,..., got {item!r}")
        grid[key.strip()] = [parse_value(v) for v in values.split(",") if v.strip()]
    base = resolve_config(raw, args.set or [])
    points = grid_points(grid)
    for point in points:  # validate every grid key before running anything
        resolve_config(base, [f"{k}={v}" for k, v in point.items()])
    out = output_dir(args.out)
    if args.name:
        name = args.name
    elif args.preset in SWEEPS:
        name = args.preset
    else:
        name = f"{base.get('name') or 'scenario'}_sweep"
    rows = []
    for k, point in enumerate(points):
        cfg = resolve_config(base, [f"{kk}={v}" for kk, v in point.items()])
        row = {"point": k, "params": point, **point}
        try:
            system = build_system(cfg)
            result = run_scenario(system, cfg["t_span"], integrator_config(cfg),
                                  Assertions(symmetric=None), backend=args.backend)
            s = result.summary
            sym = s.get("symmetry", {})
            pm = s.get("period_measured", {})
            row.update(symmetric=sym.get("symmetric"), min_uv_mean=s.get("min_uv_mean"),
                       T_low=pm.get("T_low"), T_high=pm.get("T_high"), ok=True, error="")
            atomic_write(out / f"{name}.point{k}.summary.json", to_json({"point": point, **s}) + "\n")
        except (IntegrationError, ConfigError, RealizabilityError) as err:
            row.update(symmetric=None, min_uv_mean=None, T_low=None, T_high=None, ok=False, error=str(err))
        rows.append(row)
        print(f"point {k} {point}: symmetric={row['symmetric']} min_uv={row['min_uv_mean']}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = ["point"] + list(grid) + [f for f in SWEEP_FIELDS if f not in ("point", "params")]
    writer.writerow(cols)
    for row in rows:
        writer.writerow(["" if row.get(c) is None else (f"{row[c]:.12g}" if isinstance(row.get(c), float)
                                                         else row.get(c)) for c in cols])
    atomic_write(out / f"{name}.csv", buf.getvalue())
    problems = check_sweep_expectations(rows, expect) if rows and not args.no_assert else []
    atomic_write(out / f"{name}.summary.json",
                 to_json({"name": name, "grid": grid, "rows": rows, "expect": expect, "problems": problems}) + "\n")
    for p in problems:
        print(f"[FAIL] {p}")
    print(f"{len(rows)} sweep points written to {out / (name + '.csv')}")
    return EXIT_ASSERT if problems else EXIT_OK


def cmd_list_presets(args) -> int:
    for name, preset in PRESETS.items():
        params = ", ".join(f"{k}={v}" for k, v in preset.params.items())
        print(f"{name:16s} {preset.kind:12s} t={list(preset.t_span)}  {params}")
    for name, sweep in SWEEPS.items():
        print(f"{name:16s} {'sweep':12s} base={sweep['preset']} grid={sweep['grid']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemclock",
                                     description="Build, simulate and check chemical clock networks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_assert=True):
        p.add_argument("--preset", help="preset name (see list-presets)")
        p.add_argument("--config", help="JSON scenario config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry; dotted keys reach nested entries")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./chemclock-out)")
        p.add_argument("--name", help="base name for output files")
        if with_assert:
            p.add_argument("--no-assert", action="store_true", help="report verdicts but always exit 0")
            p.add_argument("--backend", choices=("compiled", "python"), default=None)
            p.add_argument("--t-span", nargs=2, type=float, metavar=("T0", "T1"))

    p = sub.add_parser("run", help="simulate a scenario and check its assertions")
    common(p)
    p.add_argument("--emit-crn", action="store_true", help="also write the reaction network")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("emit-crn", help="write the reaction network of a scenario")
    common(p, with_assert=False)
    p.add_argument("--ode", action="append", metavar="NAME=EXPR", help="inline equation (repeatable)")
    p.add_argument("--param", action="append", metavar="NAME=VALUE", help="constant used in --ode")
    p.add_argument("--stdout", action="store_true", help="also print the arrow listing")
    p.set_defaults(func=cmd_emit_crn)

    p = sub.add_parser("sweep", help="run a scenario over a parameter grid")
    common(p)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2,...", help="grid axis (repeatable)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("list-presets", help="show available presets and sweeps")
    p.set_defaults(func=cmd_list_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RealizabilityError as err:
        print(_realizability_message(err), file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ImportError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
