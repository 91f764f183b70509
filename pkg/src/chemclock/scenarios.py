"""Scenario presets, JSON configs and parameter sweeps.

A scenario config is one JSON document::

    {
      "preset": "example_3_3",
      "name": "my-run",
      "params": {"p": 2.5},
      "initial": {"X": 1.0, "Y": 1.0},
      "t_span": [0, 200],
      "integrator": {"rel_tol": 1e-9},
      "assertions": {"low_tol": 0.05}
    }

Keys given explicitly override the preset. An inline system replaces the
preset with ``"system": {"variables": [...], "equations": {...}, "params": {...}}``.
"""
from __future__ import annotations

import copy
import itertools
import json
import math
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

import numpy as np

from .clock import ClockSpec
from .crn import RealizabilityError, crn_from_polynomial_odes
from .integrator import IntegratorConfig
from .oscillator import RelaxationSpec
from .polynomial import PolynomialOdeSystem
from .sequencer import (Assertions, ComposedSystem, TerminationConfig, build_clock_system, build_counter_system,
                        build_oscillator_system, build_termination_system)


class ConfigError(ValueError):
    pass


KINDS = ("oscillator", "clock", "counter", "termination", "custom")

_OSC_KEYS = {"f", "epsilon", "rho", "mu", "lambda", "eta1", "eta2", "canard_margin"}
KIND_PARAMS = {
    "oscillator": _OSC_KEYS,
    "clock": _OSC_KEYS | {"p", "c"},
    "counter": _OSC_KEYS | {"p", "c", "eta3"},
    "termination": _OSC_KEYS | {"p", "c", "eta3", "eta4", "eta5", "n", "variant", "x_term_initial"},
}

CONFIG_KEYS = ("preset", "name", "kind", "params", "initial", "t_span", "integrator", "assertions", "system",
               "assert", "grid", "expect")


@dataclass(frozen=True)
class Preset:
    name: str
    kind: str
    description: str
    params: Mapping[str, Any]
    t_span: tuple[float, float]
    assertions: Mapping[str, Any] = field(default_factory=dict)
    initial: Mapping[str, float] = field(default_factory=dict)

    def config(self) -> dict:
        return {"preset": self.name, "name": self.name, "kind": self.kind, "params": dict(self.params),
                "initial": dict(self.initial), "t_span": list(self.t_span), "integrator": {},
                "assertions": copy.deepcopy(dict(self.assertions))}


_EX33 = {"f": [5, -9, 6, -1], "epsilon": 1e-3, "rho": 2.0, "eta1": 0.01, "eta2": 10.0}
_EX5 = {**_EX33, "p": 2.0, "c": 5000.0, "eta3": 1.0, "eta4": 500.0, "eta5": 1.0, "n": 4.0}

PRESETS: dict[str, Preset] = {p.name: p for p in [
    Preset("example_3_2", "oscillator", "x-y relaxation oscillator without coupling scales",
           {"f": [5, -9, 6, -1], "epsilon": 1e-3, "rho": 2.0, "eta1": 1.0, "eta2": 1.0}, (0.0, 20.0)),
    Preset("example_3_3", "clock", "oscillator driving the u-v clock module",
           {**_EX33, "p": 2.0, "c": 400.0}, (0.0, 200.0),
           {"low_tol": 0.05, "high_floor": 0.5, "symmetric": True}),
    Preset("counter", "counter", "clock-gated counter x1 <- x2, x2 <- x1 + 1 over five cycles",
           {**_EX33, "p": 2.0, "c": 400.0, "eta3": 0.35}, (0.0, 106.0),
           {"low_tol": 0.05, "high_floor": 0.5, "expected_loops": 5}),
    Preset("example_5_1", "termination", "counter stopped after n loops, watching x1",
           {**_EX5, "variant": "ByX1"}, (0.0, 140.0),
           {"low_tol": 0.05, "high_floor": 0.5, "expected_final": {"X2'": [3.95, 4.05], "X1'": [3.0, 4.0]}}),
    Preset("example_5_2", "termination", "counter stopped after n loops, watching x2",
           {**_EX5, "variant": "ByX2"}, (0.0, 140.0),
           {"low_tol": 0.05, "high_floor": 0.5, "expected_halt_loop": 4, "expected_halt_phase": "first half",
            "expected_final": {"X1'": [2.95, 3.05]}}),
]}
PRESETS["terminate_by_x1"] = Preset("terminate_by_x1", **{k: v for k, v in vars(PRESETS["example_5_1"]).items()
                                                            if k != "name"})
PRESETS["terminate_by_x2"] = Preset("terminate_by_x2", **{k: v for k, v in vars(PRESETS["example_5_2"]).items()
                                                            if k != "name"})

SWEEPS: dict[str, dict] = {
    "sweep_p": {"preset": "example_3_3", "grid": {"p": [0.5, 2.5, 3.5]},
                "expect": {"symmetric": [False, True, False]}},
    "sweep_c": {"preset": "example_3_3", "grid": {"c": [4.0, 40.0, 400.0]},
                "expect": {"min_uv_decreasing_in": "c"}},
}


# -- config handling --------------------------------------------------------------

def parse_value(text: str):
    """JSON value if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config: dict, assignment: str) -> dict:
    """Apply ``key=value``; dotted keys address nested entries.

    A bare key that is not a top-level config key is taken as a parameter.
    """
    if "=" not in assignment:
        raise ConfigError(f"override must look like key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"empty key in override {assignment!r}")
    path = key.split(".")
    if len(path) == 1 and path[0] not in CONFIG_KEYS:
        path = ["params", path[0]]
    value = parse_value(raw)
    node = config
    for part in path[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot descend into non-object {part!r} in {key!r}")
        node = nxt
    node[path[-1]] = value
    if path[0] == "params" and path[-1] in ("mu", "lambda"):
        config["params"].pop("rho", None)
    elif path[0] == "params" and path[-1] == "rho":
        config["params"].pop("mu", None)
        config["params"].pop("lambda", None)
    return config


def resolve_config(raw: Mapping[str, Any] | None = None, overrides=()) -> dict:
    """Merge a raw config over its preset and apply ``overrides``.

    Raises:
        ConfigError: unknown preset, key or parameter.
    """
    raw = copy.deepcopy(dict(raw or {}))
    unknown = set(raw) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if "system" in raw:
        base = {"name": "custom", "kind": "custom", "params": {}, "initial": {}, "t_span": [0.0, 10.0],
                "integrator": {}, "assertions": {}}
    else:
        name = raw.get("preset", "example_3_3")
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
        base = PRESETS[name].config()
    for key, value in raw.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict) and key != "system":
            if key == "params" and ({"mu", "lambda"} & set(value)):
                base["params"].pop("rho", None)
            base[key].update(value)
        else:
            base[key] = value
    for item in overrides:
        apply_override(base, item)
    _check_config(base)
    return base


def _check_config(cfg: dict):
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if kind == "custom":
        if "system" not in cfg:
            raise ConfigError("custom scenarios need a 'system' block")
    else:
        extra = set(cfg["params"]) - KIND_PARAMS[kind]
        if extra:
            raise ConfigError(f"unknown parameter(s) {sorted(extra)} for a {kind} scenario; "
                              f"declared: {sorted(KIND_PARAMS[kind])}")
        if "rho" in cfg["params"] and ({"mu", "lambda"} & set(cfg["params"])):
            raise ConfigError("give either rho or (mu, lambda), not both")
    ts = cfg.get("t_span")
    if not (isinstance(ts, (list, tuple)) and len(ts) == 2):
        raise ConfigError(f"t_span must be a pair, got {ts!r}")
    try:
        t0, t1 = float(ts[0]), float(ts[1])
    except (TypeError, ValueError) as err:
        raise ConfigError(f"t_span must be numeric: {err}") from None
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
        raise ConfigError(f"t_span must satisfy t1 > t0, got {ts!r}")
    names = {f.name for f in fields(IntegratorConfig)}
    bad = set(cfg.get("integrator", {})) - names
    if bad:
        raise ConfigError(f"unknown integrator setting(s) {sorted(bad)}")
    names = {f.name for f in fields(Assertions)}
    bad = set(cfg.get("assertions", {})) - names
    if bad:
        raise ConfigError(f"unknown assertion setting(s) {sorted(bad)}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


# -- building -----------------------------------------------------------------------

def _num(params, key, default=None) -> float:
    value = params.get(key, default)
    if value is None:
        raise ConfigError(f"missing parameter {key!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {key!r} must be numeric, got {value!r}") from None


def relaxation_spec(params: Mapping[str, Any]) -> RelaxationSpec:
    f = params.get("f", (5, -9, 6, -1))
    if not isinstance(f, (list, tuple)):
        raise ConfigError("f must be a list of coefficients in ascending order")
    if "rho" in params:
        mu, lam = 0.0, -_num(params, "rho")
    else:
        mu, lam = _num(params, "mu", 0.0), _num(params, "lambda", -2.0)
    return RelaxationSpec(tuple(float(c) for c in f), mu, lam, _num(params, "epsilon", 1e-3),
                          _num(params, "eta1", 1.0), _num(params, "eta2", 1.0),
                          _num(params, "canard_margin", 0.1))


def inline_odes(block: Mapping[str, Any]) -> PolynomialOdeSystem:
    """Polynomial system from an inline ``system`` block."""
    try:
        eqs = block["equations"]
        variables = block.get("variables") or list(eqs)
        return PolynomialOdeSystem.from_expressions(eqs, block.get("params", {}), variables)
    except (KeyError, TypeError) as err:
        raise ConfigError(f"malformed system block: {err}") from None


def build_system(cfg: Mapping[str, Any]) -> ComposedSystem:
    """Composed system for a resolved config.

    Raises:
        ConfigError: invalid parameters (wraps the underlying ValueError).
        RealizabilityError: an inline system is not realizable.
    """
    kind, params = cfg["kind"], cfg["params"]
    try:
        if kind == "custom":
            odes = inline_odes(cfg["system"])
            net = crn_from_polynomial_odes(odes)
            system = ComposedSystem("custom", net, params=dict(cfg["system"].get("params", {})))
        else:
            osc = relaxation_spec(params)
            if kind == "oscillator":
                system = build_oscillator_system(osc)
            else:
                clock = ClockSpec(_num(params, "p", 2.0), _num(params, "c", 400.0), osc.eta2)
                if kind == "clock":
                    system = build_clock_system(osc, clock)
                elif kind == "counter":
                    system = build_counter_system(osc, clock, _num(params, "eta3", 0.35))
                else:
                    xt = params.get("x_term_initial")
                    term = TerminationConfig(_num(params, "n", 4.0), _num(params, "eta4", 500.0),
                                             str(params.get("variant", "ByX2")),
                                             None if xt is None else float(xt))
                    system = build_termination_system(osc, clock, _num(params, "eta3", 1.0), term,
                                                      _num(params, "eta5", 1.0))
        if cfg.get("initial"):
            system = system.with_initial(**{k: float(v) for k, v in cfg["initial"].items()})
    except (ConfigError, RealizabilityError):
        raise
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return system


def integrator_config(cfg: Mapping[str, Any]) -> IntegratorConfig:
    try:
        return IntegratorConfig(**cfg.get("integrator", {}))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"integrator settings: {err}") from None


def assertions(cfg: Mapping[str, Any]) -> Assertions:
    block = dict(cfg.get("assertions", {}))
    if "expected_final" in block:
        block["expected_final"] = {k: tuple(v) for k, v in block["expected_final"].items()}
    try:
        return Assertions(**block)
    except TypeError as err:
        raise ConfigError(f"assertion settings: {err}") from None


# -- sweeps -----------------------------------------------------------------------------

def grid_points(grid: Mapping[str, list]) -> list[dict]:
    """Cartesian product of the grid, in key order."""
    if not grid:
        return []
    keys = list(grid)
    for k in keys:
        if not isinstance(grid[k], (list, tuple)):
            raise ConfigError(f"grid entry {k!r} must be a list")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def check_sweep_expectations(rows: list[dict], expect: Mapping[str, Any]) -> list[str]:
    """Messages for every unmet sweep expectation."""
    problems = []
    if "symmetric" in expect:
        got = [r.get("symmetric") for r in rows]
        if got != list(expect["symmetric"]):
            problems.append(f"symmetry verdicts {got} != expected {list(expect['symmetric'])}")
    key = expect.get("min_uv_decreasing_in")
    if key:
        pts = sorted((r[key], r.get("min_uv_mean")) for r in rows)
        vals = [v for _, v in pts]
        if any(v is None for v in vals) or not all(b < a for a, b in zip(vals, vals[1:])):
            problems.append(f"min(u,v) statistic not strictly decreasing in {key}: {pts}")
    return problems


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def to_json(data, indent: int = 2) -> str:
    return json.dumps(_jsonable(data), indent=indent, sort_keys=False)
