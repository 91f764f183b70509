"""Adaptive integration of polynomial ODE systems.

Two backends share one algorithm: a compiled Cython kernel and a pure-Python
loop. The compiled kernel is used when it imports; set ``CHEMCLOCK_BACKEND``
to ``python`` or ``compiled`` to force a choice.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

import numpy as np

from ..polynomial import PolynomialOdeSystem
from . import _fallback
from ._layout import OK, STATUS_TEXT, CompiledSystem, compile_system
from .trajectory import (EventSpec, IntegrationStats, Trajectory, crossing_directions, crossings,
                         detect_crossings)

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

METHODS = ("explicit-adaptive", "stiff-implicit")


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _kernels is not None else ("python",)


def _select_backend(requested: str | None) -> str:
    choice = (requested or os.environ.get("CHEMCLOCK_BACKEND", "auto")).strip().lower()
    if choice == "auto":
        return "compiled" if _kernels is not None else "python"
    if choice not in ("compiled", "python"):
        raise ValueError(f"unknown backend {choice!r}; use auto, compiled or python")
    if choice == "compiled" and _kernels is None:
        raise ImportError("compiled backend requested but chemclock.integrator._kernels is not built")
    return choice


BACKEND = _select_backend(None)


class IntegrationError(RuntimeError):
    """The solver stopped before reaching the end of the time span.

    Attributes:
        status: Numeric solver status.
        partial: Trajectory up to the failure point.
    """

    def __init__(self, status: int, t: float, partial: Trajectory | None = None):
        self.status = status
        self.t = t
        self.partial = partial
        super().__init__(f"integration failed at t={t:.9g}: {STATUS_TEXT.get(status, status)}")


@dataclass(frozen=True)
class IntegratorConfig:
    """Solver settings.

    ``explicit-adaptive`` runs Dormand-Prince 5(4) and hands over to RODAS4
    once stiffness is detected; ``stiff-implicit`` runs RODAS4 throughout.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = 0.1
    method: str = "explicit-adaptive"
    nonneg_clip: bool = True
    max_steps: int = 5_000_000
    first_step: float = 0.0

    def __post_init__(self):
        if not (0 < self.rel_tol <= 1e-2):
            raise ValueError(f"rel_tol must lie in (0, 1e-2], got {self.rel_tol}")
        if not self.abs_tol > 0:
            raise ValueError(f"abs_tol must be positive, got {self.abs_tol}")
        if not self.max_step > 0:
            raise ValueError(f"max_step must be positive, got {self.max_step}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.first_step < 0:
            raise ValueError("first_step must be >= 0")

    def tightened(self, factor: float = 0.5) -> "IntegratorConfig":
        return replace(self, rel_tol=self.rel_tol * factor, abs_tol=self.abs_tol * factor)

    def to_dict(self) -> dict:
        return {
            "rel_tol": self.rel_tol, "abs_tol": self.abs_tol, "max_step": self.max_step,
            "method": self.method, "nonneg_clip": self.nonneg_clip,
            "max_steps": self.max_steps, "first_step": self.first_step,
        }


def _run(cs: CompiledSystem, y0, t0, t1, cfg: IntegratorConfig, backend: str):
    args = (y0, float(t0), float(t1), cfg.rel_tol, cfg.abs_tol, cfg.max_step, cfg.first_step,
            cfg.method == "stiff-implicit", cfg.nonneg_clip, int(cfg.max_steps))
    if backend == "compiled":
        return _kernels.solve(cs.n, cs.term_eq, cs.term_coef, cs.fac_ptr, cs.fac_var, cs.fac_pow, *args)
    return _fallback.solve(cs, *args)


def integrate(odes: PolynomialOdeSystem, x0, t_span, config: IntegratorConfig | None = None,
              backend: str | None = None) -> Trajectory:
    """Integrate ``odes`` from ``x0`` over ``t_span``.

    Args:
        odes: Polynomial right-hand side.
        x0: Initial state, one entry per variable.
        t_span: ``(t0, t1)`` with ``t1 > t0``.
        config: Solver settings; defaults to :class:`IntegratorConfig`.
        backend: ``"compiled"``, ``"python"`` or ``None`` for the import-time choice.

    Raises:
        IntegrationError: step-size underflow, non-finite values, an
            unrecoverable negative state, or too many steps.
    """
    cfg = config or IntegratorConfig()
    which = _select_backend(backend) if backend else BACKEND
    y0 = np.asarray(x0, dtype=float).ravel()
    if y0.shape != (odes.n,):
        raise ValueError(f"initial state has {y0.size} entries, system has {odes.n} variables")
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial state must be finite")
    if cfg.nonneg_clip and np.any(y0 < 0):
        raise ValueError("initial state must be non-negative when nonneg_clip is enabled")
    t0, t1 = (float(v) for v in t_span)
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
        raise ValueError(f"t_span must satisfy t1 > t0, got {t_span}")

    status, t, y, f, (nacc, nrej, nfev, njev, t_sw) = _run(compile_system(odes), y0, t0, t1, cfg, which)
    stats = IntegrationStats(int(nacc), int(nrej), int(nfev), int(njev), float(t_sw), cfg.method, which)
    if status != OK:
        partial = None
        if np.all(np.isfinite(y)) and np.all(np.isfinite(f)):
            partial = Trajectory(t, y, odes.variables, f, stats)
        raise IntegrationError(status, float(t[-1]), partial)
    return Trajectory(t, y, odes.variables, f, stats)


__all__ = [
    "BACKEND", "METHODS", "EventSpec", "IntegrationError", "IntegrationStats", "IntegratorConfig",
    "Trajectory", "available_backends", "crossing_directions", "crossings", "detect_crossings",
    "integrate",
]
