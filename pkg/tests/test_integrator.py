import math

import numpy as np
import pytest

from chemclock.integrator import (EventSpec, IntegrationError, IntegratorConfig, Trajectory, available_backends,
                                  crossing_directions, crossings, detect_crossings, integrate)
from chemclock.integrator._layout import MAX_STEPS, NEGATIVE, NONFINITE, compile_system
from chemclock.oscillator import RelaxationSpec
from chemclock.polynomial import PolynomialOdeSystem

BACKENDS = available_backends()
METHODS = ("explicit-adaptive", "stiff-implicit")


def decay():
    return PolynomialOdeSystem.from_expressions({"x": "-x"})


class TestConfig:
    @pytest.mark.parametrize("kw", [{"rel_tol": 0.0}, {"rel_tol": 0.05}, {"abs_tol": 0.0}, {"max_step": -1.0},
                                    {"method": "rk4"}, {"max_steps": 0}, {"first_step": -0.1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            IntegratorConfig(**kw)

    def test_tightened(self):
        cfg = IntegratorConfig().tightened(0.5)
        assert (cfg.rel_tol, cfg.abs_tol) == (5e-9, 5e-11)

    def test_env_backend_validation(self, monkeypatch):
        from chemclock.integrator import _select_backend
        assert _select_backend("python") == "python"
        with pytest.raises(ValueError):
            _select_backend("fortran")


class TestAnalytic:
    @pytest.mark.parametrize("backend", BACKENDS)
    def test_zero_field(self, backend):
        odes = PolynomialOdeSystem(["x"], [[]])
        tr = integrate(odes, [3.0], (0, 10), backend=backend)
        assert np.all(tr.column("x") == 3.0)
        assert tr.t1 == 10.0

    @pytest.mark.parametrize("backend", BACKENDS)
    @pytest.mark.parametrize("method", METHODS)
    def test_exponential_decay(self, backend, method):
        tr = integrate(decay(), [1.0], (0, 10), IntegratorConfig(method=method), backend=backend)
        assert abs(tr.final[0] - math.exp(-10)) < 1e-6
        assert tr.times[0] == 0.0 and tr.times[-1] == 10.0

    @pytest.mark.parametrize("method,order", [("stiff-implicit", 4), ("explicit-adaptive", 5)])
    def test_empirical_order(self, method, order):
        odes = PolynomialOdeSystem.from_expressions({"X": "-X*Y", "Y": "X - Y"})
        ref = integrate(odes, [1, 0.5], (0, 1), IntegratorConfig(rel_tol=1e-13, abs_tol=1e-15, max_step=1e-3)).final
        errs = []
        for h in (0.1, 0.05, 0.025):
            cfg = IntegratorConfig(rel_tol=1e-2, abs_tol=1.0, max_step=h, first_step=h, method=method)
            tr = integrate(odes, [1, 0.5], (0, 1), cfg)
            assert len(tr) - 1 == round(1 / h)
            errs.append(np.max(np.abs(tr.final - ref)))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > order - 0.3), rates

    def test_stiff_switch_happens_on_relaxation_system(self):
        spec = RelaxationSpec(eta1=0.01, eta2=10)
        tr = integrate(spec.odes(), [1, 1], (0, 20))
        assert 0 < tr.stats.t_switch < 20
        tr2 = integrate(spec.odes(), [1, 1], (0, 20), IntegratorConfig(method="stiff-implicit"))
        assert tr2.stats.t_switch == 0.0
        assert np.max(np.abs(tr.final - tr2.final)) < 1e-5


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
class TestBackends:
    @pytest.mark.parametrize("method", METHODS)
    def test_identical_step_sequence(self, method):
        spec = RelaxationSpec(eta1=0.01, eta2=10)
        cfg = IntegratorConfig(method=method)
        a = integrate(spec.odes(), [1, 1], (0, 12), cfg, backend="compiled")
        b = integrate(spec.odes(), [1, 1], (0, 12), cfg, backend="python")
        assert a.stats.n_accepted == b.stats.n_accepted
        assert a.stats.n_rejected == b.stats.n_rejected
        # same step sequence; BLAS vs loop summation order leaves ~1e-7 drift
        assert np.max(np.abs(a.times - b.times)) < 1e-6
        assert np.max(np.abs(a.states - b.states)) < 1e-6

    def test_stats_name_backend(self):
        assert integrate(decay(), [1.0], (0, 1), backend="python").stats.backend == "python"
        assert integrate(decay(), [1.0], (0, 1), backend="compiled").stats.backend == "compiled"


class TestFailures:
    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            integrate(decay(), [1.0, 2.0], (0, 1))
        with pytest.raises(ValueError):
            integrate(decay(), [float("nan")], (0, 1))
        with pytest.raises(ValueError):
            integrate(decay(), [-1.0], (0, 1))
        with pytest.raises(ValueError):
            integrate(decay(), [1.0], (1, 1))

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_blow_up_is_reported(self, backend):
        odes = PolynomialOdeSystem.from_expressions({"x": "x**3"})
        with pytest.raises(IntegrationError) as info:
            integrate(odes, [1.0], (0, 2), backend=backend)
        assert info.value.status in (NONFINITE, 1)
        assert info.value.t < 0.6

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_negative_state_beyond_tolerance(self, backend):
        # not a mass-action system: the state is driven through zero
        odes = PolynomialOdeSystem.from_expressions({"x": "-1"})
        with pytest.raises(IntegrationError) as info:
            integrate(odes, [1.0], (0, 2), backend=backend)
        assert info.value.status == NEGATIVE
        assert info.value.partial is not None
        assert info.value.partial.t1 == pytest.approx(1.0, abs=1e-3)
        assert np.all(info.value.partial.states >= 0)

    def test_negative_state_allowed_without_clipping(self):
        odes = PolynomialOdeSystem.from_expressions({"x": "-1"})
        tr = integrate(odes, [1.0], (0, 2), IntegratorConfig(nonneg_clip=False))
        assert tr.final[0] == pytest.approx(-1.0, abs=1e-9)

    def test_max_steps(self):
        with pytest.raises(IntegrationError) as info:
            integrate(decay(), [1.0], (0, 10), IntegratorConfig(max_steps=5, max_step=0.1))
        assert info.value.status == MAX_STEPS


class TestTrajectory:
    def make(self):
        t = np.linspace(0, 2 * np.pi, 41)
        return Trajectory(t, np.column_stack([np.sin(t), np.cos(t)]), ("s", "c"),
                          np.column_stack([np.cos(t), -np.sin(t)]))

    def test_validation(self):
        with pytest.raises(ValueError):
            Trajectory([0, 0], [[1], [2]], ("x",))
        with pytest.raises(ValueError):
            Trajectory([0, 1], [[1], [np.inf]], ("x",))
        with pytest.raises(ValueError):
            Trajectory([0, 1], [[1, 2], [3, 4]], ("x",))

    def test_hermite_interpolation_accuracy(self):
        tr = self.make()
        t = np.linspace(0, 2 * np.pi, 1001)
        assert np.max(np.abs(tr.interpolate(t, "s") - np.sin(t))) < 1e-5
        assert np.max(np.abs(tr.interpolate(t, "s", derivative=True) - np.cos(t))) < 1e-3
        assert tr(1.0).shape == (2,)
        assert np.ndim(tr.interpolate(1.0, "c")) == 0
        with pytest.raises(ValueError):
            tr.interpolate(7.0)

    def test_linear_interpolation_without_derivs(self):
        tr = Trajectory([0.0, 2.0], [[0.0], [4.0]], ("x",))
        assert tr.interpolate(0.5, "x") == pytest.approx(1.0)
        assert tr.interpolate(0.5, "x", derivative=True) == pytest.approx(2.0)

    def test_resample_keeps_knots(self):
        tr = self.make()
        r = tr.resample(3)
        assert len(r) == 3 * (len(tr) - 1) + 1
        assert np.array_equal(r.times[::3], tr.times)
        assert np.array_equal(r.states[::3], tr.states)
        assert tr.resample(1) is tr

    def test_between(self):
        tr = self.make()
        part = tr.between(1.0, 2.0)
        assert part.t0 >= 1.0 and part.t1 <= 2.0
        with pytest.raises(ValueError):
            tr.between(10.0)

    def test_csv_round_trip(self, tmp_path):
        tr = self.make()
        path = tmp_path / "t.csv"
        tr.to_csv(path)
        text = path.read_text()
        assert text.splitlines()[0] == "t,s,c"
        back = Trajectory.from_csv(path)
        assert back.names == ("s", "c")
        assert np.max(np.abs(back.states - tr.states)) < 1e-11
        assert tr.to_csv() == text

    def test_csv_is_deterministic(self):
        spec = RelaxationSpec(eta1=0.01, eta2=10)
        a = integrate(spec.odes(), [1, 1], (0, 30)).to_csv()
        b = integrate(spec.odes(), [1, 1], (0, 30)).to_csv()
        assert a == b


class TestCrossings:
    def test_constant_has_none(self):
        tr = Trajectory([0, 1, 2], [[3.0], [3.0], [3.0]], ("x",))
        assert crossings(tr, "x", 2.0) == []

    def test_sine_roots(self):
        t = np.linspace(0.1, 10, 60)
        tr = Trajectory(t, np.sin(t)[:, None], ("x",), np.cos(t)[:, None])
        found = crossings(tr, "x", 0.0)
        assert len(found) == 3
        # roots of the interpolant are within Hermite error of the true roots
        assert np.max(np.abs(np.array(found) - np.pi * np.arange(1, 4))) < 1e-4
        rising = detect_crossings(tr, EventSpec("x", 0.0, "rising"))
        falling = detect_crossings(tr, EventSpec(0, 0.0, "falling"))
        assert rising == pytest.approx([2 * np.pi])
        assert falling == pytest.approx([np.pi, 3 * np.pi], abs=1e-4)
        assert [r for _, r in crossing_directions(tr, "x", 0.0)] == [False, True, False]

    def test_event_spec_validation(self):
        with pytest.raises(ValueError):
            EventSpec("x", 0.0, "up")

    def test_threshold_equality_counts_as_above(self):
        tr = Trajectory([0, 1, 2], [[1.0], [2.0], [1.0]], ("x",))
        assert len(crossings(tr, "x", 2.0)) == 2

    def test_relaxation_rising_crossings_are_periodic(self):
        spec = RelaxationSpec(eta1=0.01, eta2=10)
        tr = integrate(spec.odes(), [1, 1], (0, 200))
        rising = np.array(crossings(tr, "X", 2.0, "rising"))
        gaps = np.diff(rising[rising > 40])
        assert np.ptp(gaps) < 1e-3 * gaps.mean()
        assert gaps.mean() == pytest.approx(19.9547, abs=1e-3)

    def test_resampled_crossings_agree(self):
        spec = RelaxationSpec(eta1=0.01, eta2=10)
        tr = integrate(spec.odes(), [1, 1], (0, 100))
        a = crossings(tr, "X", 2.0)
        b = crossings(tr.resample(2), "X", 2.0)
        assert len(a) == len(b)
        assert np.max(np.abs(np.array(a) - np.array(b))) < 1e-6


class TestCompiledLayout:
    def test_exponent_matrix_round_trip(self):
        odes = PolynomialOdeSystem.from_expressions({"x": "2*x**3*y - y + 1", "y": "x*y"})
        cs = compile_system(odes)
        assert cs.n == 2
        assert len(cs.term_coef) == 4
        expo = cs.exponent_matrix()
        rebuilt = {}
        for k in range(len(cs.term_coef)):
            rebuilt.setdefault(int(cs.term_eq[k]), {})[tuple(expo[k])] = cs.term_coef[k]
        assert rebuilt[0] == odes.terms("x")
        assert rebuilt[1] == odes.terms("y")


@pytest.mark.slow
@pytest.mark.parametrize("preset", ["example_3_2", "example_3_3", "counter", "example_5_1", "example_5_2"])
def test_self_convergence(preset):
    """Halving both tolerances moves the final state by < 10x the tolerance-weighted norm."""
    from chemclock.scenarios import PRESETS, build_system
    cfg = PRESETS[preset].config()
    system = build_system(cfg)
    base = IntegratorConfig()
    a = integrate(system.odes, system.x0, cfg["t_span"], base)
    b = integrate(system.odes, system.x0, cfg["t_span"], base.tightened(0.5))
    scale = base.rel_tol * np.abs(b.final) + base.abs_tol
    assert np.max(np.abs(a.final - b.final) / scale) < 10
    assert np.min(a.states) >= 0 and np.min(b.states) >= 0
