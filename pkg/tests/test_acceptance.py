"""Acceptance criteria; the terminal summary prints one pass/fail line per criterion."""
import time
from collections import Counter

import numpy as np
import pytest

import _props
from chemclock.clock import NoAlternationError, verify_symmetry
from chemclock.crn import Reaction, ReactionNetwork, derive_odes
from chemclock.integrator import IntegratorConfig, integrate
from chemclock.oscillator import RelaxationSpec, estimate_period, measure_period
from chemclock.scenarios import PRESETS, build_system
from chemclock.sequencer import count_loops, logistic_solution, termination_module, termination_verdict

SPEC = RelaxationSpec(eta1=0.01, eta2=10.0)


def symmetric(traj, low_tol=0.05, high_floor=0.5):
    try:
        return verify_symmetry(traj, "U", "V", low_tol, high_floor)
    except NoAlternationError:
        return None


def listing(lines, rates):
    return ReactionNetwork([], [Reaction.parse(text, rate) for text, rate in zip(lines, rates)])


def multiset_diff(emitted, literal):
    names = {r.key(12): r.format() for net in (emitted, literal) for r in net.reactions}
    a, b = Counter(emitted.reaction_multiset()), Counter(literal.reaction_multiset())
    return sorted(names[k] for k in a - b), sorted(names[k] for k in b - a)


@pytest.mark.acceptance(1, "period quadrature")
def test_period_quadrature(record_property):
    t = time.perf_counter()
    est = estimate_period(SPEC)
    secs = time.perf_counter() - t
    record_property("detail", f"T1={est.T1:.6f} T2={est.T2:.6f} in {secs:.3f}s")
    assert abs(est.T1 - 10.47) <= 0.02
    assert abs(est.T2 - 9.19) <= 0.02
    assert secs < 1.0


@pytest.mark.acceptance(2, "simulated dwell times vs quadrature")
def test_simulated_period(record_property):
    t = time.perf_counter()
    traj = integrate(SPEC.odes(), [1.0, 1.0], (0.0, 200.0))
    m = measure_period(traj, SPEC)
    secs = time.perf_counter() - t
    est = estimate_period(SPEC)
    rl, rh = abs(m.T_low - est.T1) / est.T1, abs(m.T_high - est.T2) / est.T2
    record_property("detail", f"T_low={m.T_low:.4f} ({rl:.1%}) T_high={m.T_high:.4f} ({rh:.1%}) "
                              f"over {m.n_cycles} cycles in {secs:.2f}s")
    assert rl <= 0.15 and rh <= 0.15
    assert secs < 10.0


@pytest.mark.acceptance(3, "limit-cycle robustness")
def test_limit_cycle_robustness(record_property):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    eq = np.array([2.0, 3.0])  # (rho, f(rho))
    periods = []
    while len(periods) < 20:
        p = rng.uniform(0.1, 5.0, 2)
        if np.linalg.norm(p - eq) < 0.1:
            continue
        traj = integrate(SPEC.odes(), p, (0.0, 200.0))
        periods.append(tuple(measure_period(traj, SPEC))[:2])
    secs = time.perf_counter() - t
    arr = np.array(periods)
    spread = (arr.max(0) - arr.min(0)) / arr.min(0)
    record_property("detail", f"spread T_low={spread[0]:.2e} T_high={spread[1]:.2e} over 20 starts in {secs:.1f}s")
    assert np.all(spread < 0.02)
    assert secs < 60.0


@pytest.mark.acceptance(4, "clock symmetry")
def test_clock_symmetry(sim, record_property):
    _, res = sim("example_3_3")
    base = symmetric(res.trajectory, 0.05, 0.5)
    # min(u, v) < 0.01 outside slivers whose edges are set by the 0.01 level itself
    tight = symmetric(res.trajectory, 0.01, 0.5)
    worst = max(tr.duration / tr.budget for tr in tight.segmentation.transitions) if tight else float("nan")
    record_property("detail", (
        f"low_tol=0.05: {base.symmetric if base else None}; "
        f"min(u,v) outside 0.01-slivers max={tight.segmentation.max_off_outside:.4g}, "
        f"longest sliver {worst:.0%} of budget; "
        f"outside 0.05-slivers max={base.segmentation.max_off_outside:.4g}"))
    assert base is not None and base.symmetric, base.segmentation.failures if base else "no alternation"
    assert tight is not None and tight.symmetric, tight.segmentation.failures if tight else "no alternation"
    assert tight.segmentation.max_off_outside < 0.01


@pytest.mark.acceptance(5, "negative controls")
def test_negative_controls(sim, record_property):
    verdicts = {}
    for label, kw in (("p=0.5", {"p": 0.5}), ("p=3.5", {"p": 3.5}), ("c=4", {"c": 4.0}), ("c=400", {"c": 400.0})):
        r = symmetric(sim("example_3_3", **kw)[1].trajectory, 0.05, 0.5)
        verdicts[label] = bool(r and r.symmetric)
    record_property("detail", ", ".join(f"{k}:{v}" for k, v in verdicts.items()))
    assert verdicts == {"p=0.5": False, "p=3.5": False, "c=4": False, "c=400": True}


@pytest.mark.acceptance(6, "counter staircase")
def test_counter_staircase(sim, record_property):
    _, res = sim("counter")
    lc = count_loops(res.trajectory, "X1")
    err = max(abs(v - k) for k, v in enumerate(lc.plateaus))
    record_property("detail", f"count={lc.count} plateaus={[round(v, 4) for v in lc.plateaus]} max|err|={err:.4f}")
    assert lc.count == 5
    assert err <= 0.05


@pytest.mark.acceptance(7, "termination watching x1")
def test_termination_by_x1(sim, record_property):
    system, res = sim("example_5_1")
    tv = termination_verdict(res.trajectory, system)
    x1p, x2p = tv.final["X1'"], tv.final["X2'"]
    record_property("detail", f"x2'={x2p:.5f} x1'={x1p:.5f} latch={tv.latch_ok} t_drop={tv.t_drop:.2f}")
    assert abs(x2p - 4.0) <= 0.05
    assert 3.0 < x1p < 4.0
    assert tv.latch_ok


@pytest.mark.acceptance(8, "termination watching x2")
def test_termination_by_x2(sim, record_property):
    system, res = sim("example_5_2")
    tv = termination_verdict(res.trajectory, system)
    x1p = tv.final["X1'"]
    record_property("detail", f"halted={tv.halted} at loop {tv.loop_at_drop} ({tv.phase_at_drop}), "
                              f"t_drop={tv.t_drop:.2f}, x1'={x1p:.5f}")
    assert tv.halted
    assert (tv.loop_at_drop, tv.phase_at_drop) == (4, "first half")
    assert abs(x1p - 3.0) <= 0.05


@pytest.mark.acceptance(9, "logistic closed form")
def test_logistic_oracle(record_property):
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
    grid = np.linspace(0.0, 5.0, 200_001)
    errs = {}
    for n, x1 in ((4.0, 1.0), (4.0, 3.0), (4.0, 5.0)):
        odes = derive_odes(termination_module("X1", "X3", 1.0)).substitute({"N": n, "X1": x1})
        traj = integrate(odes, [n], (0.0, 5.0), cfg)
        errs[(n, x1)] = float(np.max(np.abs(traj.interpolate(grid, "X3") - logistic_solution(grid, n, x1, n))))
    record_property("detail", "dense sup-norm " + ", ".join(f"{k}:{v:.1e}" for k, v in errs.items()))
    assert max(errs.values()) < 1e-6


EPS = 1e-3
LITERAL_3_2 = (["4X -> 3X", "3X -> 4X", "2X -> X", "X -> 2X", "X + Y -> Y", "X + Y -> 2Y", "2Y -> Y"],
               [1 / EPS, 6 / EPS, 9 / EPS, 5 / EPS, 1 / EPS, 1.0, 2.0])


def literal_termination_listing(e1=0.01, e2=10.0, rho=2.0, p=2.0, c=5000.0, e3=1.0, e4=500.0, e5=1.0):
    s = e1 * e2
    lines = ["4X -> 3X", "3X -> 4X", "2X -> X", "X -> 2X", "X + Y -> Y", "X + Y -> 2Y", "2Y -> Y",
             "0 -> U", "U -> 0", "U + V -> V", "X -> V", "V -> 0", "U + V -> U",
             "X2 + U -> X1 + X2 + U", "X1 + U -> U", "X1 + V -> X1 + X2 + V", "V -> X2 + V", "X2 + V -> V",
             "N + X4 -> N + 2X4", "X2 + X4 -> X2", "2X4 -> X4",
             "X2' + U + X4 -> X1' + X2' + U + X4", "X1' + U + X4 -> U + X4",
             "X1' + V + X4 -> X1' + X2' + V + X4", "V + X4 -> X2' + V + X4", "X2' + V + X4 -> V + X4"]
    rates = [s / EPS, 6 * s / EPS, 9 * s / EPS, 5 * s / EPS, s / EPS, s, s * rho,
             e2 * p, e2, e2 * c, e2, e2, e2 * c,
             e3, e3, e3, e3, e3, e4, e4, e4, e5, e5, e5, e5, e5]
    return listing(lines, rates)


@pytest.mark.acceptance(10, "reaction listings and round trip")
def test_crn_round_trips(record_property):
    parts = {}
    ex32 = build_system(PRESETS["example_3_2"].config()).network
    extra, missing = multiset_diff(ex32, listing(*LITERAL_3_2))
    parts["7-reaction listing"] = (not extra and not missing, f"emitted-only {extra}, listed-only {missing}")

    ex52 = build_system(PRESETS["example_5_2"].config()).network
    extra5, missing5 = multiset_diff(ex52, literal_termination_listing())
    parts["26-reaction listing"] = (not extra5 and not missing5, f"emitted-only {extra5}, listed-only {missing5}")

    before = _props.CASES["round trip"]
    _props.prop_round_trip()
    ran = _props.CASES["round trip"] - before
    parts["round trip"] = (ran >= 100, f"{ran} random systems")

    record_property("detail", "; ".join(f"{k}: {'ok' if ok else 'MISMATCH'} ({why})" for k, (ok, why) in parts.items()))
    # every mismatch is one of the three listed reactions that contradict the listed ODEs
    assert len(ex32.reactions) == 7 and len(ex52.reactions) == 26
    assert all(ok for ok, _ in parts.values())


@pytest.mark.acceptance(11, "property suites")
def test_property_suites(record_property):
    before = sum(_props.CASES[k] for k in _props.PROPERTIES)
    for fn in _props.PROPERTIES.values():
        fn()
    ran = {k: _props.CASES[k] for k in _props.PROPERTIES}
    total = sum(ran.values()) - before
    record_property("detail", f"{total} cases: " + ", ".join(f"{k}={v}" for k, v in ran.items()))
    assert total >= 500
