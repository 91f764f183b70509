"""Clock-gated reaction modules, the loop counter and spontaneous loop termination.

A module is gated by adding catalyst species to both sides of each of its
reactions, which multiplies its mass-action rates by the catalyst
concentrations. Gating one module with U and another with V makes them run in
alternation.

Counter: module 1 (V-gated) loads ``x2 <- x1 + 1``; module 2 (U-gated) loads
``x1 <- x2``. Each clock cycle raises both by one.

Termination: ``N + T -> N + 2T``, ``C + T -> C`` and ``2T -> T`` give
``dt/dt = eta4 (n - c - t) t`` for a counter species C. Once C reaches n, T
decays to zero and a second counter gated by T stops.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np

from .clock import ClockSpec, NoAlternationError, build_clock_reactions, min_uv_statistic, verify_symmetry
from .crn import Complex, Reaction, ReactionNetwork, derive_odes, validate_realizability
from .integrator import IntegratorConfig, Trajectory, crossing_directions, integrate
from .oscillator import (OscillatorError, RelaxationSpec, analyze_manifold, estimate_period, measure_period,
                         validate_hypothesis)
from .polynomial import PolynomialOdeSystem


class CompositionError(ValueError):
    pass


# -- gating -----------------------------------------------------------------------

@dataclass(frozen=True)
class GatedModule:
    """``base`` with every reaction catalysed by ``gates`` and rates scaled by ``scale``."""

    base: ReactionNetwork
    gates: tuple[str, ...]
    scale: float

    @cached_property
    def network(self) -> ReactionNetwork:
        g = Complex({name: 1 for name in self.gates})
        rx = [Reaction(r.reactants + g, r.products + g, r.rate_constant * self.scale) for r in self.base.reactions]
        return ReactionNetwork(list(self.base.names) + [n for n in self.gates if n not in self.base.names], rx)


def gate_module(base: ReactionNetwork, gates: Sequence[str], scale: float) -> GatedModule:
    """Add each gate species as a catalyst to every reaction of ``base``.

    Raises:
        CompositionError: a gate already belongs to ``base``, or ``scale <= 0``.
    """
    gates = tuple(gates)
    if len(set(gates)) != len(gates):
        raise CompositionError(f"duplicate gate species in {gates}")
    clash = set(gates) & set(base.names)
    if clash:
        raise CompositionError(f"gate species {sorted(clash)} already appear in the base module")
    if not (scale > 0 and math.isfinite(scale)):
        raise CompositionError(f"gate scale must be positive, got {scale}")
    return GatedModule(base, gates, float(scale))


def load_module(target: str, source: str, offset_one: bool = False) -> ReactionNetwork:
    """Module driving ``target`` toward ``source`` (plus 1 when ``offset_one``).

    ``S -> S + T``, optionally ``0 -> T``, and ``T -> 0``, all at unit rate.
    """
    rx = [Reaction(Complex({source: 1}), Complex({source: 1, target: 1}), 1.0)]
    if offset_one:
        rx.append(Reaction(Complex(), Complex({target: 1}), 1.0))
    rx.append(Reaction(Complex({target: 1}), Complex(), 1.0))
    return ReactionNetwork([source, target], rx)


def counter_modules(x1: str = "X1", x2: str = "X2") -> tuple[ReactionNetwork, ReactionNetwork]:
    """``(module 1, module 2)``: ``x2 <- x1 + 1`` and ``x1 <- x2``."""
    return load_module(x2, x1, offset_one=True), load_module(x1, x2)


def termination_module(counter: str, term: str, eta4: float, n_species: str = "N") -> ReactionNetwork:
    """``N + T -> N + 2T``, ``C + T -> C``, ``2T -> T`` at rate ``eta4``."""
    if not eta4 > 0:
        raise CompositionError("eta4 must be positive")
    return ReactionNetwork([n_species, counter, term], [
        Reaction(Complex({n_species: 1, term: 1}), Complex({n_species: 1, term: 2}), eta4),
        Reaction(Complex({counter: 1, term: 1}), Complex({counter: 1}), eta4),
        Reaction(Complex({term: 2}), Complex({term: 1}), eta4),
    ])


def logistic_solution(t, n: float, x_counter: float, x0: float, eta4: float = 1.0):
    """Closed form of ``dx/dt = eta4 (n - x_counter - x) x`` from ``x(0) = x0``."""
    a = n - x_counter
    t = np.asarray(t, dtype=float)
    if a == 0:
        return x0 / (1.0 + eta4 * x0 * t)
    k = a / x0 - 1.0
    return a / (1.0 + k * np.exp(-a * eta4 * t))


# -- composed systems -------------------------------------------------------------

VARIANTS = ("ByX1", "ByX2")


@dataclass(frozen=True)
class TerminationConfig:
    """Loop termination after ``n`` loops.

    ``ByX1`` watches X1 with termination species X3; ``ByX2`` watches X2 with
    termination species X4.
    """

    n: float = 4.0
    eta4: float = 500.0
    variant: str = "ByX2"
    x_term_initial: float | None = None

    def __post_init__(self):
        if not self.n > 0:
            raise CompositionError(f"n must be positive, got {self.n}")
        if not self.eta4 > 0:
            raise CompositionError(f"eta4 must be positive, got {self.eta4}")
        if self.variant not in VARIANTS:
            raise CompositionError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.x_term_initial is not None and not self.x_term_initial > 0:
            raise CompositionError(
                "the termination species needs a positive initial concentration: "
                "T = 0 is an equilibrium of dT/dt = eta4 (n - c - T) T, so the gate would stay shut forever")

    @property
    def x_term0(self) -> float:
        return self.n if self.x_term_initial is None else float(self.x_term_initial)

    @property
    def counter(self) -> str:
        return "X1" if self.variant == "ByX1" else "X2"

    @property
    def term(self) -> str:
        return "X3" if self.variant == "ByX1" else "X4"

    def to_dict(self) -> dict:
        return {"n": self.n, "eta4": self.eta4, "variant": self.variant, "x_term_initial": self.x_term0}


@dataclass(frozen=True, eq=False)
class ComposedSystem:
    """Reaction network plus everything needed to simulate and judge it.

    Attributes:
        kind: ``oscillator``, ``clock``, ``counter``, ``termination`` or ``custom``.
        network: Full reaction network, constant catalysts included.
        constants: Catalysts held at fixed concentration; folded in :attr:`odes`.
        initial: Initial concentration per species (missing entries are 0).
        params: Flat parameter record for reports.
    """

    kind: str
    network: ReactionNetwork
    constants: Mapping[str, float] = field(default_factory=dict)
    initial: Mapping[str, float] = field(default_factory=dict)
    params: Mapping[str, float] = field(default_factory=dict)
    osc: RelaxationSpec | None = None
    clock: ClockSpec | None = None
    termination: TerminationConfig | None = None

    def __post_init__(self):
        unknown = set(self.initial) - set(self.network.names)
        if unknown:
            raise CompositionError(f"initial values for unknown species {sorted(unknown)}")
        for name in self.constants:
            if name not in self.network.names:
                raise CompositionError(f"constant species {name} is not in the network")
        if not validate_realizability(derive_odes(self.network)).ok:  # pragma: no cover - networks always are
            raise CompositionError("derived ODEs are not realizable")

    @cached_property
    def odes(self) -> PolynomialOdeSystem:
        full = derive_odes(self.network)
        for name in self.constants:
            if not full.is_zero(name):
                raise CompositionError(f"species {name} is held constant but is not a catalyst")
        return full.substitute(dict(self.constants))

    @property
    def variables(self) -> tuple[str, ...]:
        return self.odes.variables

    @property
    def index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.variables)}

    @property
    def x0(self) -> np.ndarray:
        return np.array([float(self.initial.get(v, 0.0)) for v in self.variables])

    def with_initial(self, **values: float) -> "ComposedSystem":
        return replace(self, initial={**self.initial, **values})

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "network": self.network.to_dict(),
            "constants": dict(self.constants),
            "initial": {v: float(self.initial.get(v, 0.0)) for v in self.network.names},
            "parameters": dict(self.params),
        }


def _check_osc(osc: RelaxationSpec):
    report = validate_hypothesis(osc)
    if not report.ok:
        raise CompositionError("oscillator spec fails validation:\n" + report.to_text())


def _params(osc: RelaxationSpec, clock: ClockSpec | None = None, **extra) -> dict:
    out = {"epsilon": osc.epsilon, "mu": osc.mu, "lambda": osc.lam, "eta1": osc.eta1, "eta2": osc.eta2}
    if osc.mu == 0:
        out["rho"] = -osc.lam
    if clock is not None:
        out.update(p=clock.p, c=clock.c)
    out.update(extra)
    return out


def build_oscillator_system(osc: RelaxationSpec, x0: tuple[float, float] = (1.0, 1.0)) -> ComposedSystem:
    return ComposedSystem("oscillator", osc.reactions(), initial={"X": x0[0], "Y": x0[1]}, params=_params(osc),
                          osc=osc)


def build_clock_system(osc: RelaxationSpec, clock: ClockSpec, x0: tuple[float, float] = (1.0, 1.0),
                       validate: bool = True) -> ComposedSystem:
    """x-y oscillator driving the u-v clock module.

    The clock's own ``eta2`` is replaced by the oscillator's so that the whole
    system shares one coupling scale.
    """
    if validate:
        _check_osc(osc)
    clock = replace(clock, eta2=osc.eta2)
    net = osc.reactions().merge(build_clock_reactions(clock, "X"))
    return ComposedSystem("clock", net, initial={"X": x0[0], "Y": x0[1]}, params=_params(osc, clock),
                          osc=osc, clock=clock)


def build_counter_system(osc: RelaxationSpec, clock: ClockSpec, eta3: float,
                         x0: tuple[float, float] = (1.0, 1.0)) -> ComposedSystem:
    """Oscillator, clock and the U/V-gated counter (six variables).

    Raises:
        CompositionError: the oscillator spec fails validation.
    """
    base = build_clock_system(osc, clock, x0)
    m1, m2 = counter_modules("X1", "X2")
    if eta3 > 0:
        net = base.network.merge(gate_module(m2, ["U"], eta3).network, gate_module(m1, ["V"], eta3).network)
        net = ReactionNetwork(list(base.network.names) + ["X1", "X2"], net.reactions)
    elif eta3 == 0:
        net = ReactionNetwork(list(base.network.names) + ["X1", "X2"], base.network.reactions)
    else:
        raise CompositionError("eta3 must be non-negative")
    return ComposedSystem("counter", net, initial=dict(base.initial),
                          params=_params(osc, base.clock, eta3=eta3), osc=osc, clock=base.clock)


def build_termination_system(osc: RelaxationSpec, clock: ClockSpec, eta3: float, cfg: TerminationConfig,
                             eta5: float, x0: tuple[float, float] = (1.0, 1.0)) -> ComposedSystem:
    """Counter plus a primed counter that stops after ``cfg.n`` loops (nine variables).

    The primed counter X1', X2' is gated by the clock signal and by the
    termination species. N is kept as a catalyst at concentration n.
    """
    if not eta5 > 0:
        raise CompositionError("eta5 must be positive")
    base = build_counter_system(osc, clock, eta3, x0)
    term = cfg.term
    m1, m2 = counter_modules("X1'", "X2'")
    net = base.network.merge(
        termination_module(cfg.counter, term, cfg.eta4, "N"),
        gate_module(m2, ["U", term], eta5).network,
        gate_module(m1, ["V", term], eta5).network,
    )
    net = ReactionNetwork(list(base.network.names) + [term, "X1'", "X2'", "N"], net.reactions)
    initial = dict(base.initial)
    initial[term] = cfg.x_term0
    initial["N"] = cfg.n
    params = _params(osc, base.clock, eta3=eta3, eta4=cfg.eta4, eta5=eta5, n=cfg.n)
    return ComposedSystem("termination", net, constants={"N": cfg.n}, initial=initial, params=params,
                          osc=osc, clock=base.clock, termination=cfg)


# -- loop counting ------------------------------------------------------------------

@dataclass(frozen=True)
class LoopCount:
    """Iterates as ``(count, plateau_levels)``."""

    count: int
    plateaus: tuple[float, ...]
    intervals: tuple[tuple[float, float], ...] = ()

    def __iter__(self) -> Iterator:
        return iter((self.count, list(self.plateaus)))

    def to_dict(self) -> dict:
        return {"count": self.count, "plateaus": list(self.plateaus),
                "intervals": [list(i) for i in self.intervals]}


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive index ranges of consecutive True entries."""
    if not mask.any():
        return []
    d = np.diff(mask.astype(np.int8))
    starts = list(np.nonzero(d == 1)[0] + 1)
    ends = list(np.nonzero(d == -1)[0])
    if mask[0]:
        starts.insert(0, 0)
    if mask[-1]:
        ends.append(len(mask) - 1)
    return list(zip(starts, ends))


def count_loops(traj: Trajectory, counter_idx: str | int = "X1", *, period: float | None = None,
                plateau_tol: float = 1e-3, min_fraction: float = 0.2) -> LoopCount:
    """Count staircase steps of a counter species.

    A plateau is a stretch where ``|dx/dt| < plateau_tol`` lasting longer than
    ``min_fraction`` of the clock period. The count is the number of plateaus
    minus one (the starting level).

    Args:
        period: Clock period. When omitted it is taken as the median spacing
            between the starts of flat stretches.

    Raises:
        ValueError: no plateau is found.
    """
    i = traj.index(counter_idx)
    t = traj.times
    x = traj.states[:, i]
    d = traj.derivs[:, i] if traj.derivs is not None else np.gradient(x, t)
    runs = [(a, b) for a, b in _runs(np.abs(d) < plateau_tol) if b > a]
    span = traj.t1 - traj.t0
    if period is None:
        long_runs = [(a, b) for a, b in runs if t[b] - t[a] >= 0.02 * span]
        starts = [t[a] for a, _ in long_runs]
        period = float(np.median(np.diff(starts))) if len(starts) > 1 else span
    plateaus = [(a, b) for a, b in runs if t[b] - t[a] > min_fraction * period]
    if not plateaus:
        raise ValueError(f"no plateau longer than {min_fraction:.2g} x period={period:.4g} found")
    levels = tuple(float(np.median(x[a:b + 1])) for a, b in plateaus)
    return LoopCount(len(plateaus) - 1, levels, tuple((float(t[a]), float(t[b])) for a, b in plateaus))


# -- termination analysis ----------------------------------------------------------

@dataclass(frozen=True)
class TerminationVerdict:
    halted: bool
    derivative_sup: float
    x_term_final: float
    latch_ok: bool
    t_drop: float | None
    loop_at_drop: int | None
    phase_at_drop: str | None
    final: dict

    def to_dict(self) -> dict:
        return {"halted": self.halted, "derivative_sup": self.derivative_sup, "x_term_final": self.x_term_final,
                "latch_ok": self.latch_ok, "t_drop": self.t_drop, "loop_at_drop": self.loop_at_drop,
                "phase_at_drop": self.phase_at_drop, "final": self.final}


def loop_phases(traj: Trajectory, level: float, var: str = "X") -> list[tuple[float, float, float]]:
    """``(start, mid, end)`` of each complete loop: x above ``level`` then below."""
    events = crossing_directions(traj, var, level)
    loops = []
    for k, (t, rising) in enumerate(events):
        if not rising:
            continue
        rest = events[k + 1:]
        fall = next((tf for tf, r in rest if not r), None)
        nxt = next((tr for tr, r in rest if r), traj.t1)
        if fall is not None:
            loops.append((t, fall, nxt))
    return loops


def termination_verdict(traj: Trajectory, system: ComposedSystem, threshold: float = 1e-6,
                        final_fraction: float = 0.1) -> TerminationVerdict:
    """Primed derivatives below ``threshold`` over the final stretch and the gate species below it."""
    cfg = system.termination
    if cfg is None:
        raise CompositionError("system has no termination module")
    term = traj.column(cfg.term)
    tail = traj.times >= traj.t1 - final_fraction * (traj.t1 - traj.t0)
    primed = [traj.index("X1'"), traj.index("X2'")]
    dsup = float(np.max(np.abs(traj.derivs[tail][:, primed]))) if traj.derivs is not None else math.nan
    below = np.nonzero(term < threshold)[0]
    t_drop = latch = None
    if len(below):
        first = below[0]
        t_drop = float(traj.times[first])
        latch = bool(np.all(term[first:] < threshold))
    loop = phase = None
    if t_drop is not None and system.osc is not None:
        level = analyze_manifold(system.osc).mid_level
        for k, (a, mid, b) in enumerate(loop_phases(traj, level), start=1):
            if a <= t_drop < b:
                loop, phase = k, ("first half" if t_drop < mid else "second half")
                break
    final = {name: float(traj.states[-1, traj.index(name)]) for name in traj.names}
    halted = bool(dsup < threshold and term[-1] < threshold)
    return TerminationVerdict(halted, dsup, float(term[-1]), bool(latch), t_drop, loop, phase, final)


# -- scenario execution ------------------------------------------------------------

@dataclass(frozen=True)
class Assertions:
    """Thresholds and expectations checked by :func:`run_scenario`."""

    period_rel_tol: float = 0.15
    low_tol: float | None = 0.05
    high_floor: float | None = 0.5
    symmetric: bool | None = True
    expected_loops: int | None = None
    plateau_tol: float = 0.05
    expected_halt_loop: int | None = None
    expected_halt_phase: str | None = None
    expected_final: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    check_period: bool = True


@dataclass
class ScenarioResult:
    trajectory: Trajectory
    summary: dict
    verdicts: dict[str, bool]

    @property
    def ok(self) -> bool:
        return all(self.verdicts.values())


def expected_increments(traj: Trajectory, level: float, var: str = "X") -> tuple[int, int]:
    """Range ``(lo, hi)`` of counter increments that ``traj`` should show.

    Each low phase of x (U active) that follows a high phase raises X1 by one.
    Whether the last such phase has produced a visible plateau by the end of
    the run depends on the loading rate, so it widens the range by one unless
    a full low dwell plus a fifth of a cycle has elapsed since it began.
    """
    ev = crossing_directions(traj, var, level)
    falls = [t for k, (t, r) in enumerate(ev) if not r and any(rr for _, rr in ev[:k])]
    if not falls:
        return 0, 0
    rises = [t for t, r in ev if r]
    lows = [next(tr for tr in rises if tr > tf) - tf for tf in falls if any(tr > tf for tr in rises)]
    cycle = float(np.median(np.diff(rises))) if len(rises) > 1 else traj.t1 - traj.t0
    settled = lows and traj.t1 - falls[-1] >= float(np.median(lows)) + 0.2 * cycle
    return (len(falls), len(falls)) if settled else (len(falls) - 1, len(falls))


def run_scenario(system: ComposedSystem, t_span, config: IntegratorConfig | None = None,
                 assertions: Assertions | None = None, backend: str | None = None) -> ScenarioResult:
    """Integrate ``system`` and evaluate every analysis that applies to its kind.

    Raises:
        IntegrationError: propagated from the solver.
    """
    cfg = config or IntegratorConfig()
    a = assertions or Assertions()
    traj = integrate(system.odes, system.x0, t_span, cfg, backend=backend)
    summary: dict = {"kind": system.kind, "t_span": [float(t_span[0]), float(t_span[1])],
                     "parameters": dict(system.params), "integrator": cfg.to_dict(),
                     "stats": traj.stats.to_dict(),
                     "final_state": {n: float(v) for n, v in zip(traj.names, traj.final)}}
    verdicts: dict[str, bool] = {}

    if system.osc is not None and a.check_period:
        try:
            est = estimate_period(system.osc)
            summary["period_estimate"] = {"T1": est.T1, "T2": est.T2}
        except OscillatorError as err:
            est = None
            summary["period_estimate"] = {"error": str(err)}
        try:
            meas = measure_period(traj, system.osc)
            summary["period_measured"] = meas.to_dict()
            if est is not None:
                rel_low = abs(meas.T_low - est.T1) / est.T1
                rel_high = abs(meas.T_high - est.T2) / est.T2
                summary["period_measured"].update(rel_err_low=rel_low, rel_err_high=rel_high)
                verdicts["period"] = rel_low <= a.period_rel_tol and rel_high <= a.period_rel_tol
        except OscillatorError as err:
            summary["period_measured"] = {"error": str(err)}
            verdicts["period"] = False

    if system.clock is not None:
        summary["min_uv_mean"] = min_uv_statistic(traj)
        try:
            ok, seg = verify_symmetry(traj, "U", "V", a.low_tol, a.high_floor)
            summary["symmetry"] = {"symmetric": ok, **seg.to_dict()}
        except NoAlternationError as err:
            ok = False
            summary["symmetry"] = {"symmetric": False, "failures": [str(err)], "segments": []}
        if a.symmetric is not None:
            verdicts["symmetry"] = ok == a.symmetric

    if system.kind in ("counter", "termination") and system.osc is not None:
        level = analyze_manifold(system.osc).mid_level
        try:
            lc = count_loops(traj, "X1")
            summary["loops"] = lc.to_dict()
        except ValueError as err:
            lc = None
            summary["loops"] = {"error": str(err)}
        if a.expected_loops is not None:
            lo = hi = a.expected_loops
        else:
            lo, hi = expected_increments(traj, level)
        summary["loops_expected"] = [lo, hi]
        if system.kind == "counter":
            verdicts["loop_count"] = lc is not None and lo <= lc.count <= hi
            if lc is not None:
                verdicts["plateau_levels"] = all(abs(v - k) <= a.plateau_tol for k, v in enumerate(lc.plateaus))

    if system.kind == "termination":
        tv = termination_verdict(traj, system)
        summary["termination"] = tv.to_dict()
        verdicts["termination"] = tv.halted and tv.latch_ok
        if a.expected_halt_loop is not None:
            verdicts["halt_loop"] = tv.loop_at_drop == a.expected_halt_loop and (
                a.expected_halt_phase is None or tv.phase_at_drop == a.expected_halt_phase)

    for name, (lo, hi) in a.expected_final.items():
        val = float(traj.final[traj.index(name)])
        verdicts[f"final_{name}"] = lo < val < hi

    summary["verdicts"] = dict(verdicts)
    summary["ok"] = all(verdicts.values())
    return ScenarioResult(traj, summary, verdicts)
