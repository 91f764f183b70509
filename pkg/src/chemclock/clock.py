"""Clock-signal synthesis from an oscillating input.

The u-v module

    du/dt = eta2 * (p - u - c*u*v)
    dv/dt = eta2 * (x - v - c*u*v)

outputs approximately ``max(p - x, 0)`` on u and ``max(x - p, 0)`` on v. When x
alternates between a band below p and a band above p, U and V alternate
between near zero and clearly positive. :func:`verify_symmetry` measures how
cleanly that happens on a trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .crn import Complex, Reaction, ReactionNetwork, derive_odes
from .integrator.trajectory import Trajectory, crossing_directions
from .polynomial import PolynomialOdeSystem


class ClockError(ValueError):
    pass


class NoAlternationError(ClockError):
    """Only one of the two signals ever becomes active in the inspected window."""


@dataclass(frozen=True)
class ClockSpec:
    """Parameters of the u-v module.

    ``c = 0`` is accepted: the annihilation reactions vanish and U and V simply
    load p and x.
    """

    p: float = 2.0
    c: float = 400.0
    eta2: float = 10.0

    def __post_init__(self):
        if not (self.p > 0 and math.isfinite(self.p)):
            raise ClockError(f"p must be positive, got {self.p}")
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ClockError(f"c must be non-negative, got {self.c}")
        if not (self.eta2 > 0 and math.isfinite(self.eta2)):
            raise ClockError(f"eta2 must be positive, got {self.eta2}")

    def to_dict(self) -> dict:
        return {"p": self.p, "c": self.c, "eta2": self.eta2}


def truncated_subtraction_equilibrium(p: float, x: float, c: float) -> tuple[float, float, float, float]:
    """Equilibrium of the u-v module for constant input x.

    Returns:
        ``(u_exact, v_exact, u_approx, v_approx)``. The exact pair uses the
        positive root of ``v**2 + (p - x + 1/c) v - x/c = 0`` and
        ``u = v + p - x``; the approximate pair is ``(max(p-x, 0), max(x-p, 0))``.
    """
    if p <= 0 or c < 0 or x < 0:
        raise ClockError("need p > 0, c >= 0 and x >= 0")
    if c == 0:
        v = float(x)
    else:
        b = p - x + 1.0 / c
        q = x / c
        disc = math.sqrt(b * b + 4.0 * q)
        # cancellation-free form of (-b + disc) / 2
        v = 2.0 * q / (b + disc) if b > 0 else 0.5 * (disc - b)
    u = v + p - x
    return u, v, max(p - x, 0.0), max(x - p, 0.0)


def build_clock_reactions(spec: ClockSpec, input_species: str = "X",
                          names: tuple[str, str] = ("U", "V")) -> ReactionNetwork:
    """Reactions of the u-v module with ``input_species`` catalysing V production."""
    U, V = names
    k = spec.eta2
    rx = [
        Reaction(Complex(), Complex({U: 1}), k * spec.p),
        Reaction(Complex({U: 1}), Complex(), k),
    ]
    if spec.c > 0:
        rx.append(Reaction(Complex({U: 1, V: 1}), Complex({V: 1}), k * spec.c))
    rx += [
        Reaction(Complex({input_species: 1}), Complex({input_species: 1, V: 1}), k),
        Reaction(Complex({V: 1}), Complex(), k),
    ]
    if spec.c > 0:
        rx.append(Reaction(Complex({U: 1, V: 1}), Complex({U: 1}), k * spec.c))
    return ReactionNetwork([U, V, input_species], rx)


def isolated_clock_odes(spec: ClockSpec, x: float, names: tuple[str, str] = ("U", "V")) -> PolynomialOdeSystem:
    """u-v equations with the input frozen at ``x``."""
    net = build_clock_reactions(spec, "X", ("U", "V"))
    odes = derive_odes(net).substitute({"X": x})
    return PolynomialOdeSystem(names, odes.equations)


# -- symmetry verification ------------------------------------------------------

@dataclass(frozen=True)
class PhaseSegment:
    """Interval where one signal is at or above ``high_floor``."""

    t_start: float
    t_end: float
    active: str
    low_max: float
    high_min: float
    partial: bool = False
    entry_end: float = math.nan
    exit_start: float = math.nan

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def to_dict(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "active": self.active,
                "low_max": self.low_max, "high_min": self.high_min}


@dataclass(frozen=True)
class Transition:
    t_start: float
    t_end: float
    budget: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class PhaseSegmentation:
    segments: tuple[PhaseSegment, ...]
    transitions: tuple[Transition, ...]
    low_tol: float
    high_floor: float
    failures: tuple[str, ...] = ()
    max_off_outside: float = math.nan
    mean_min: float = math.nan

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.segments]

    def to_dict(self) -> dict:
        return {"low_tol": self.low_tol, "high_floor": self.high_floor, "segments": self.to_list(),
                "failures": list(self.failures), "max_off_outside": self.max_off_outside,
                "mean_min": self.mean_min}


class SymmetryResult(NamedTuple):
    symmetric: bool
    segmentation: PhaseSegmentation


def default_thresholds(u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """``(0.05 * amp, 0.5 * amp)`` with amp the smaller 95th percentile of u and v."""
    amp = min(float(np.percentile(u, 95)), float(np.percentile(v, 95)))
    return 0.05 * amp, 0.5 * amp


def _high_intervals(traj: Trajectory, var: str | int, level: float) -> list[tuple[float, float, bool]]:
    """Maximal intervals with ``var >= level``; the flag marks intervals cut by the window."""
    x = traj.column(var)
    events = crossing_directions(traj, var, level)
    out = []
    start = traj.t0 if x[0] >= level else None
    for t, rising in events:
        if rising:
            start = t
        elif start is not None:
            out.append((start, t, start == traj.t0))
            start = None
    if start is not None:
        out.append((start, traj.t1, True))
    return out


def _time_average(t: np.ndarray, y: np.ndarray) -> float:
    if len(t) < 2:
        return float(y[0])
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)) / (t[-1] - t[0]))


def verify_symmetry(traj: Trajectory, u_idx: str | int = "U", v_idx: str | int = "V",
                    low_tol: float | None = None, high_floor: float | None = None, *,
                    transient: float = 0.2, sliver_frac: float = 0.05) -> SymmetryResult:
    """Check that U and V alternate with the idle one near zero.

    Time after the transient is split into segments where one signal is at
    or above ``high_floor``. In each segment the other signal must stay below
    ``low_tol`` except in transition slivers at the segment boundaries. A
    transition runs from the moment the incoming signal reaches ``low_tol``
    until the outgoing one falls below it for good; it must be shorter than
    ``sliver_frac`` of the shorter adjacent segment.

    Raises:
        NoAlternationError: one of the signals never becomes active.
    """
    window = traj.between(traj.t0 + transient * (traj.t1 - traj.t0))
    iu, iv = window.index(u_idx), window.index(v_idx)
    u, v = window.states[:, iu], window.states[:, iv]
    if low_tol is None or high_floor is None:
        d_low, d_high = default_thresholds(u, v)
        low_tol = d_low if low_tol is None else low_tol
        high_floor = d_high if high_floor is None else high_floor
    if not (0 < low_tol < high_floor):
        raise ClockError(f"need 0 < low_tol < high_floor, got {low_tol}, {high_floor}")

    segs_raw = [(a, b, "U", p) for a, b, p in _high_intervals(window, iu, high_floor)]
    segs_raw += [(a, b, "V", p) for a, b, p in _high_intervals(window, iv, high_floor)]
    have = {s[2] for s in segs_raw}
    if have != {"U", "V"}:
        missing = sorted({"U", "V"} - have)
        raise NoAlternationError(f"signal(s) {missing} never reach high_floor={high_floor:.4g} after the transient")
    segs_raw.sort()

    failures: list[str] = []
    off_idx = {"U": iv, "V": iu}
    on_idx = {"U": iu, "V": iv}
    segments: list[PhaseSegment] = []
    t = window.times
    for a, b, name, partial in segs_raw:
        off = window.states[:, off_idx[name]]
        on = window.states[:, on_idx[name]]
        off_events = [(tc, r) for tc, r in crossing_directions(window, off_idx[name], low_tol) if a < tc < b]
        entry_end = a
        if float(window.interpolate(a, off_idx[name])) >= low_tol:
            falls = [tc for tc, r in off_events if not r]
            entry_end = falls[0] if falls else b
        exit_start = b
        if float(window.interpolate(b, off_idx[name])) >= low_tol:
            rises = [tc for tc, r in off_events if r and tc >= entry_end]
            exit_start = rises[-1] if rises else entry_end
        inner = (t > entry_end) & (t < exit_start)
        if np.any(off[inner] >= low_tol):
            bad_t = t[inner][off[inner] >= low_tol]
            failures.append(f"{'V' if name == 'U' else 'U'} >= low_tol inside {name} segment "
                            f"at t in [{bad_t[0]:.4g}, {bad_t[-1]:.4g}]")
        low_max = float(np.max(off[inner])) if inner.any() else float("nan")
        span = (t >= a) & (t <= b)
        high_min = float(np.min(on[span])) if span.any() else float(high_floor)
        segments.append(PhaseSegment(float(a), float(b), name, low_max, high_min, bool(partial),
                                     float(entry_end), float(exit_start)))

    for s0, s1 in zip(segments, segments[1:]):
        if s1.t_start < s0.t_end:
            failures.append(f"U and V both high during [{s1.t_start:.4g}, {min(s0.t_end, s1.t_end):.4g}]")
        if s0.active == s1.active:
            failures.append(f"two consecutive {s0.active} segments without alternation at t={s0.t_end:.4g}")

    full = {k: [s.duration for s in segments if s.active == k and not s.partial] for k in ("U", "V")}

    def nominal(s: PhaseSegment) -> float:
        if s.partial and full[s.active]:
            return float(np.median(full[s.active]))
        return s.duration

    transitions = []
    for s0, s1 in zip(segments, segments[1:]):
        tr = Transition(s0.exit_start, s1.entry_end, sliver_frac * min(nominal(s0), nominal(s1)))
        transitions.append(tr)
        if tr.duration >= tr.budget:
            failures.append(f"transition at t={s0.t_end:.4g} lasts {tr.duration:.4g} "
                            f"(budget {tr.budget:.4g})")

    # sampled min(u, v) outside transition slivers and window-edge gaps
    outside = (t >= segments[0].entry_end) & (t <= segments[-1].exit_start)
    for tr in transitions:
        outside &= ~((t >= tr.t_start) & (t <= tr.t_end))
    mins = np.minimum(u, v)
    max_off = float(np.max(mins[outside])) if outside.any() else float("nan")
    seg = PhaseSegmentation(tuple(segments), tuple(transitions), float(low_tol), float(high_floor),
                            tuple(failures), max_off, _time_average(t, mins))
    return SymmetryResult(not failures, seg)


def min_uv_statistic(traj: Trajectory, u_idx: str | int = "U", v_idx: str | int = "V",
                     transient: float = 0.2) -> float:
    """Time average of ``min(u, v)`` after the transient."""
    window = traj.between(traj.t0 + transient * (traj.t1 - traj.t0))
    return _time_average(window.times, np.minimum(window.column(u_idx), window.column(v_idx)))
