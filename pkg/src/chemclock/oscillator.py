"""Fast-slow relaxation oscillator on the x-y plane.

The subsystem is

    dx/dt = eta1*eta2 * (f(x) - y) * x / epsilon
    dy/dt = eta1*eta2 * (x + mu*y + lam) * y

with an S-shaped polynomial nullcline ``y = f(x)``. This module locates the
folds of that nullcline, builds the singular orbit, validates the conditions
for a first-quadrant relaxation cycle and estimates the dwell times on the two
attracting branches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad
from scipy.optimize import brentq

from .crn import ReactionNetwork, crn_from_polynomial_odes
from .integrator.trajectory import Trajectory, crossing_directions
from .polynomial import PolynomialOdeSystem
from .reports import Check, ValidationReport


class OscillatorError(ValueError):
    """Raised when a spec cannot support the requested analysis."""


@dataclass(frozen=True)
class RelaxationSpec:
    """Parameters of the x-y oscillator.

    Attributes:
        f_coeffs: Coefficients of f in ascending order, e.g. ``(5, -9, 6, -1)``
            for ``-x**3 + 6x**2 - 9x + 5``.
        mu: Slope of the slow line ``x + mu*y + lam``; expected <= 0.
        lam: Offset of the slow line. ``mu=0, lam=-rho`` gives ``(x - rho)``.
        epsilon: Time-scale separation, ``0 < epsilon << 1``.
        eta1, eta2: Coupling scales; both multiply the whole x-y field.
        canard_margin: Required distance of the equilibrium from either fold,
            as a fraction of the fold separation.
    """

    f_coeffs: tuple[float, ...] = (5.0, -9.0, 6.0, -1.0)
    mu: float = 0.0
    lam: float = -2.0
    epsilon: float = 1e-3
    eta1: float = 1.0
    eta2: float = 1.0
    canard_margin: float = 0.1

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.f_coeffs)
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs = coeffs[:-1]
        object.__setattr__(self, "f_coeffs", coeffs)
        if len(coeffs) < 4:
            raise OscillatorError(f"f must have degree >= 3, got coefficients {coeffs}")
        if not all(math.isfinite(c) for c in coeffs):
            raise OscillatorError("f coefficients must be finite")
        for name in ("epsilon", "eta1", "eta2"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise OscillatorError(f"{name} must be positive, got {v}")
        if not 0 <= self.canard_margin < 0.5:
            raise OscillatorError("canard_margin must lie in [0, 0.5)")

    @classmethod
    def with_rho(cls, rho: float, f_coeffs: Sequence[float] = (5.0, -9.0, 6.0, -1.0), **kw) -> "RelaxationSpec":
        """Slow line ``(x - rho)``, i.e. ``mu = 0`` and ``lam = -rho``."""
        return cls(f_coeffs=tuple(f_coeffs), mu=0.0, lam=-float(rho), **kw)

    @property
    def scale(self) -> float:
        return self.eta1 * self.eta2

    @property
    def f(self) -> Polynomial:
        return Polynomial(self.f_coeffs)

    def g(self, x, y):
        return x + self.mu * y + self.lam

    def odes(self, names: tuple[str, str] = ("X", "Y")) -> PolynomialOdeSystem:
        k = self.scale
        x_terms = [((i + 1, 0), k * c / self.epsilon) for i, c in enumerate(self.f_coeffs)]
        x_terms.append(((1, 1), -k / self.epsilon))
        y_terms = [((1, 1), k), ((0, 2), k * self.mu), ((0, 1), k * self.lam)]
        return PolynomialOdeSystem(names, [x_terms, y_terms])

    def reactions(self, names: tuple[str, str] = ("X", "Y")) -> ReactionNetwork:
        """One mass-action reaction per term of :meth:`odes`."""
        return crn_from_polynomial_odes(self.odes(names))

    def to_dict(self) -> dict:
        return {"f_coeffs": list(self.f_coeffs), "mu": self.mu, "lam": self.lam, "epsilon": self.epsilon,
                "eta1": self.eta1, "eta2": self.eta2, "canard_margin": self.canard_margin}


@dataclass(frozen=True)
class CriticalManifold:
    """Folds of ``y = f(x)``: a minimum at ``x_m`` and a maximum at ``x_M > x_m``."""

    x_m: float
    y_m: float
    x_M: float
    y_M: float

    @property
    def fold_min(self) -> tuple[float, float]:
        return (self.x_m, self.y_m)

    @property
    def fold_max(self) -> tuple[float, float]:
        return (self.x_M, self.y_M)

    @property
    def width(self) -> float:
        return self.x_M - self.x_m

    @property
    def mid_level(self) -> float:
        return 0.5 * (self.x_m + self.x_M)

    def branch(self, x: float) -> str:
        if x < self.x_m:
            return "S_l"
        if x > self.x_M:
            return "S_r"
        return "S_m"


@dataclass(frozen=True)
class SingularOrbit:
    """Zero-epsilon cycle: slow segments A-B on S_l and C-D on S_r, fast jumps B-C and D-A."""

    x_A: float
    x_C: float
    manifold: CriticalManifold

    @property
    def A(self) -> tuple[float, float]:
        return (self.x_A, self.manifold.y_M)

    @property
    def B(self) -> tuple[float, float]:
        return self.manifold.fold_min

    @property
    def C(self) -> tuple[float, float]:
        return (self.x_C, self.manifold.y_m)

    @property
    def D(self) -> tuple[float, float]:
        return self.manifold.fold_max


def _real_roots(p: Polynomial, tol: float = 1e-9) -> np.ndarray:
    r = p.roots()
    real = r[np.abs(r.imag) <= tol * np.maximum(1.0, np.abs(r))].real
    return np.sort(real)


def analyze_manifold(spec: RelaxationSpec, degeneracy_tol: float = 1e-8) -> CriticalManifold:
    """Locate the two non-degenerate folds of f.

    Raises:
        OscillatorError: f' does not have exactly two simple real roots, or
            the minimum lies to the right of the maximum.
    """
    f = spec.f
    df, d2f = f.deriv(), f.deriv(2)
    crit = _real_roots(df)
    scale = max(1.0, float(np.max(np.abs(df.coef))))
    for x in crit:
        if abs(d2f(x)) < degeneracy_tol * scale:
            raise OscillatorError(f"degenerate critical point of f at x={x:.6g} (f''={d2f(x):.3g})")
    if len(crit) != 2:
        raise OscillatorError(f"f must have exactly two real critical points, found {len(crit)}")
    mins = [x for x in crit if d2f(x) > 0]
    maxs = [x for x in crit if d2f(x) < 0]
    x_m, x_M = float(mins[0]), float(maxs[0])
    if not x_m < x_M:
        raise OscillatorError(f"fold minimum x_m={x_m:.6g} must lie left of fold maximum x_M={x_M:.6g}")
    # polish with Newton on f'
    for _ in range(3):
        x_m -= df(x_m) / d2f(x_m)
        x_M -= df(x_M) / d2f(x_M)
    return CriticalManifold(float(x_m), float(f(x_m)), float(x_M), float(f(x_M)))


def singular_orbit(manifold: CriticalManifold, spec: RelaxationSpec, xtol: float = 1e-12) -> SingularOrbit:
    """Landing abscissae ``f(x_A) = y_M`` on S_l and ``f(x_C) = y_m`` on S_r.

    Raises:
        OscillatorError: the left landing point would have ``x < 0`` (the orbit
            leaves the first quadrant) or no right landing point exists.
    """
    f = spec.f
    m = manifold
    lo = 0.0
    if f(lo) - m.y_M < 0:
        raise OscillatorError(
            f"f(0)={f(lo):.6g} is below the upper fold value {m.y_M:.6g}; the left landing point lies at x < 0")
    x_A = lo if f(lo) == m.y_M else brentq(lambda x: f(x) - m.y_M, lo, m.x_m, xtol=xtol, rtol=4 * np.finfo(float).eps)
    step = m.width
    b = m.x_M + step
    for _ in range(60):
        if f(b) - m.y_m <= 0:
            break
        step *= 2.0
        b = m.x_M + step
    else:
        raise OscillatorError("no right landing point: f stays above the lower fold value on S_r")
    x_C = brentq(lambda x: f(x) - m.y_m, m.x_M, b, xtol=xtol, rtol=4 * np.finfo(float).eps)
    return SingularOrbit(float(x_A), float(x_C), m)


def _equilibria(spec: RelaxationSpec) -> np.ndarray:
    """x-coordinates where the slow line meets y = f(x) with y > 0."""
    line = Polynomial([spec.lam, 1.0]) + spec.mu * spec.f
    xs = _real_roots(line)
    f = spec.f
    return np.array([x for x in xs if x > 0 and f(x) > 0])


def validate_hypothesis(spec: RelaxationSpec, samples: int = 32) -> ValidationReport:
    """Check the conditions for a first-quadrant relaxation cycle.

    Checks: two non-degenerate folds; singular orbit inside the open first
    quadrant with a margin band; a unique equilibrium on the middle branch,
    away from both folds by ``spec.canard_margin`` of the fold separation;
    slow flow toward the folds on both outer branches; ``mu <= 0``.
    """
    checks: list[Check] = []
    try:
        m = analyze_manifold(spec)
        checks.append(Check("two non-degenerate folds", True,
                            f"x_m={m.x_m:.6g}, x_M={m.x_M:.6g}", m.width))
    except OscillatorError as err:
        m = None
        checks.append(Check("two non-degenerate folds", False, str(err)))

    orbit = None
    if m is None:
        checks.append(Check("singular orbit in first quadrant", False, "needs folds"))
    else:
        try:
            orbit = singular_orbit(m, spec)
            band = spec.canard_margin * (m.y_M - m.y_m)
            # x = 0 is invariant, so a landing point on the axis is allowed
            margin = m.y_m - band
            ok = margin > 0 and orbit.x_A >= 0
            checks.append(Check("singular orbit in first quadrant", ok,
                                f"x_A={orbit.x_A:.6g}, x_C={orbit.x_C:.6g}, y_m={m.y_m:.6g}, band={band:.3g}",
                                margin))
        except OscillatorError as err:
            checks.append(Check("singular orbit in first quadrant", False, str(err)))

    if m is None:
        checks.append(Check("unique equilibrium on middle branch", False, "needs folds"))
    else:
        eq = _equilibria(spec)
        lo = m.x_m + spec.canard_margin * m.width
        hi = m.x_M - spec.canard_margin * m.width
        if len(eq) != 1:
            checks.append(Check("unique equilibrium on middle branch", False,
                                f"{len(eq)} intersections with y>0: {np.round(eq, 6).tolist()}"))
        else:
            x_e = float(eq[0])
            margin = min(x_e - m.x_m, m.x_M - x_e) / m.width
            checks.append(Check("unique equilibrium on middle branch", lo < x_e < hi,
                                f"x_e={x_e:.6g}, allowed ({lo:.6g}, {hi:.6g})", margin))

    if orbit is None:
        checks.append(Check("slow flow toward folds", False, "needs singular orbit"))
    else:
        f, df = spec.f, spec.f.deriv()
        bad = []
        frac = (np.arange(samples) + 0.5) / samples
        for branch, a, b, sign in (("S_l", orbit.x_A, m.x_m, 1.0), ("S_r", m.x_M, orbit.x_C, -1.0)):
            for x in a + (b - a) * frac:
                y = f(x)
                xdot = spec.scale * spec.g(x, y) * y / df(x)
                if not sign * xdot > 0:
                    bad.append(f"{branch} x={x:.4g}")
        for name, (x, y) in (("lower fold", m.fold_min), ("upper fold", m.fold_max)):
            if spec.g(x, y) == 0:
                bad.append(f"slow line passes through {name}")
        checks.append(Check("slow flow toward folds", not bad, "; ".join(bad[:5])))

    checks.append(Check("mu <= 0", spec.mu <= 0, f"mu={spec.mu:.6g}", 0.0 - spec.mu))
    return ValidationReport(tuple(checks))


class PeriodEstimate(tuple):
    """``(T1, T2)``: slow dwell on the low branch and on the high branch."""

    def __new__(cls, T1: float, T2: float):
        return super().__new__(cls, (T1, T2))

    @property
    def T1(self) -> float:
        return self[0]

    @property
    def T2(self) -> float:
        return self[1]

    @property
    def total(self) -> float:
        return self[0] + self[1]


def estimate_period(spec: RelaxationSpec, tol: float = 1e-6) -> PeriodEstimate:
    """Slow-branch travel times along the critical manifold.

    ``T = integral of f'(x) / (eta1*eta2 * g(x, f(x)) * f(x)) dx`` from x_A to
    x_m (low branch) and from x_C to x_M (high branch).

    Raises:
        OscillatorError: the parameters fail validation, the integrand has a pole
            inside an interval, or the quadrature error exceeds ``tol``.
    """
    report = validate_hypothesis(spec)
    if not report.ok:
        raise OscillatorError("spec fails validation:\n" + report.to_text())
    m = analyze_manifold(spec)
    orbit = singular_orbit(m, spec)
    f = spec.f
    num = f.deriv()
    den = (Polynomial([spec.lam, 1.0]) + spec.mu * f) * f * spec.scale
    poles = _real_roots(den)
    out = []
    for a, b in ((orbit.x_A, m.x_m), (orbit.x_C, m.x_M)):
        lo, hi = min(a, b), max(a, b)
        inside = [p for p in poles if lo < p < hi]
        if inside:
            raise OscillatorError(f"integrand has a pole at x={inside[0]:.6g} inside ({lo:.6g}, {hi:.6g})")
        val, err = quad(lambda x: num(x) / den(x), a, b, epsabs=1e-12, epsrel=1e-12, limit=200)
        if err > tol:
            raise OscillatorError(f"quadrature error {err:.3g} exceeds {tol:.3g}")
        out.append(val)
    return PeriodEstimate(*out)


@dataclass(frozen=True)
class PeriodMeasurement:
    """Measured dwell times; iterates as ``(T_low, T_high, T_full)``."""

    T_low: float
    T_high: float
    T_full: float
    std_low: float = 0.0
    std_high: float = 0.0
    n_cycles: int = 0
    level: float = math.nan
    low_dwells: tuple[float, ...] = field(default=(), repr=False)
    high_dwells: tuple[float, ...] = field(default=(), repr=False)

    def __iter__(self) -> Iterator[float]:
        return iter((self.T_low, self.T_high, self.T_full))

    def to_dict(self) -> dict:
        return {"T_low": self.T_low, "T_high": self.T_high, "T_full": self.T_full,
                "std_low": self.std_low, "std_high": self.std_high, "n_cycles": self.n_cycles,
                "level": self.level}


def dwell_times(traj: Trajectory, var, level: float) -> tuple[list[float], list[float]]:
    """Complete dwell intervals below and above ``level``."""
    events = crossing_directions(traj, var, level)
    low, high = [], []
    for (ta, ra), (tb, rb) in zip(events, events[1:]):
        if ra == rb:
            continue
        (high if ra else low).append(tb - ta)
    return low, high


def measure_period(traj: Trajectory, spec: RelaxationSpec | None = None, *, var="X",
                   level: float | None = None, transient: float = 0.2, min_cycles: int = 3) -> PeriodMeasurement:
    """Mean dwell below and above the fold mid-level after a transient.

    Args:
        traj: Trajectory containing ``var``.
        spec: Supplies the level ``(x_m + x_M) / 2`` when ``level`` is None.
        transient: Fraction of the time span discarded from the start.
        min_cycles: Minimum number of complete low and high dwells.

    Raises:
        OscillatorError: fewer than ``min_cycles`` complete cycles.
    """
    if level is None:
        if spec is None:
            raise OscillatorError("need a spec or an explicit level")
        level = analyze_manifold(spec).mid_level
    t_cut = traj.t0 + transient * (traj.t1 - traj.t0)
    window = traj.between(t_cut)
    low, high = dwell_times(window, var, level) if len(window) > 1 else ([], [])
    n = min(len(low), len(high))
    if n < min_cycles:
        raise OscillatorError(f"found {n} complete cycles after the transient, need {min_cycles}")
    t_low, t_high = float(np.mean(low)), float(np.mean(high))
    return PeriodMeasurement(t_low, t_high, t_low + t_high, float(np.std(low)), float(np.std(high)), n,
                             float(level), tuple(low), tuple(high))
