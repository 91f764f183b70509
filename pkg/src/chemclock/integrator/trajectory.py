"""Dense trajectories, cubic Hermite interpolation and threshold crossings."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

DIRECTIONS = ("rising", "falling", "both")


@dataclass(frozen=True)
class IntegrationStats:
    n_accepted: int = 0
    n_rejected: int = 0
    n_fev: int = 0
    n_jev: int = 0
    t_switch: float = math.nan
    method: str = ""
    backend: str = ""

    def to_dict(self) -> dict:
        return {
            "n_accepted": self.n_accepted, "n_rejected": self.n_rejected,
            "n_fev": self.n_fev, "n_jev": self.n_jev,
            "t_switch": None if math.isnan(self.t_switch) else self.t_switch,
            "method": self.method, "backend": self.backend,
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-stamped states at accepted steps.

    Attributes:
        times: Strictly increasing sample times, shape ``(m,)``.
        states: Sampled states, shape ``(m, n)``.
        names: Variable names, one per column.
        derivs: Right-hand side at each sample. When present, interpolation
            is cubic Hermite; otherwise it is piecewise linear.
        stats: Solver counters.
    """

    times: np.ndarray
    states: np.ndarray
    names: tuple[str, ...]
    derivs: np.ndarray | None = None
    stats: IntegrationStats = field(default_factory=IntegrationStats)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.states, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", y)
        object.__setattr__(self, "names", tuple(self.names))
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("trajectory needs a non-empty 1-D time array")
        if y.shape != (len(t), len(self.names)):
            raise ValueError(f"states shape {y.shape} does not match {len(t)} times x {len(self.names)} names")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValueError("trajectory contains non-finite values")
        if self.derivs is not None:
            d = np.asarray(self.derivs, dtype=float)
            if d.shape != y.shape:
                raise ValueError("derivs must have the same shape as states")
            object.__setattr__(self, "derivs", d)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> np.ndarray:
        return self.states[-1].copy()

    def index(self, var: int | str) -> int:
        if isinstance(var, str):
            return self.names.index(var)
        if not 0 <= var < len(self.names):
            raise IndexError(f"variable index {var} out of range")
        return int(var)

    def column(self, var: int | str) -> np.ndarray:
        return self.states[:, self.index(var)]

    def __getitem__(self, var: int | str) -> np.ndarray:
        return self.column(var)

    def interpolate(self, t, var: int | str | None = None, derivative: bool = False):
        """Evaluate the interpolant (or its time derivative) at ``t``.

        Returns an array shaped like ``t`` (plus a trailing variable axis when
        ``var`` is None).
        """
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.t0) or np.any(t > self.t1):
            raise ValueError(f"interpolation outside [{self.t0}, {self.t1}]")
        ys = self.states if var is None else self.states[:, self.index(var)]
        ds = None
        if self.derivs is not None:
            ds = self.derivs if var is None else self.derivs[:, self.index(var)]
        if len(self.times) == 1:
            out = np.zeros((len(t),) + ys.shape[1:]) if derivative else np.repeat(ys[:1], len(t), axis=0)
            return out[0] if scalar else out
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        h = self.times[k + 1] - self.times[k]
        s = (t - self.times[k]) / h
        if ys.ndim == 2:
            s, h = s[:, None], h[:, None]
        ya, yb = ys[k], ys[k + 1]
        if ds is None:
            out = (yb - ya) / h if derivative else ya + s * (yb - ya)
        elif derivative:
            da, db = ds[k], ds[k + 1]
            out = ((6 * s * s - 6 * s) * (ya - yb) / h
                   + (3 * s * s - 4 * s + 1) * da + (3 * s * s - 2 * s) * db)
        else:
            da, db = ds[k], ds[k + 1]
            s2, s3 = s * s, s * s * s
            out = ((2 * s3 - 3 * s2 + 1) * ya + (s3 - 2 * s2 + s) * h * da
                   + (3 * s2 - 2 * s3) * yb + (s3 - s2) * h * db)
        return out[0] if scalar else out

    __call__ = interpolate

    def resample(self, factor: int) -> "Trajectory":
        """Insert ``factor - 1`` interpolated samples inside every step."""
        if factor < 1:
            raise ValueError("factor must be >= 1")
        if factor == 1 or len(self.times) == 1:
            return self
        frac = np.arange(factor) / factor
        t = (self.times[:-1, None] + np.diff(self.times)[:, None] * frac).ravel()
        t = np.append(t, self.times[-1])
        # keep exact knots where rounding would move them
        t[::factor] = self.times
        y = self.interpolate(t)
        d = self.interpolate(t, derivative=True) if self.derivs is not None else None
        y[::factor] = self.states
        if d is not None:
            d[::factor] = self.derivs
        return Trajectory(t, y, self.names, d, self.stats)

    def between(self, t_start: float, t_end: float | None = None) -> "Trajectory":
        """Samples with ``t_start <= t <= t_end``."""
        t_end = self.t1 if t_end is None else t_end
        mask = (self.times >= t_start) & (self.times <= t_end)
        if not mask.any():
            raise ValueError(f"no samples in [{t_start}, {t_end}]")
        d = None if self.derivs is None else self.derivs[mask]
        return Trajectory(self.times[mask], self.states[mask], self.names, d, self.stats)

    def to_csv(self, target=None) -> str | None:
        """Write ``t,<names>`` rows with ``%.12g`` formatting.

        Args:
            target: Path or text stream. When ``None`` the CSV is returned.
        """
        buf = io.StringIO()
        buf.write(",".join(("t",) + self.names) + "\n")
        data = np.column_stack([self.times, self.states])
        np.savetxt(buf, data, fmt="%.12g", delimiter=",")
        text = buf.getvalue()
        if target is None:
            return text
        if isinstance(target, (str, os.PathLike)):
            with open(target, "w", newline="") as fh:
                fh.write(text)
        else:
            target.write(text)
        return None

    @classmethod
    def from_csv(cls, source) -> "Trajectory":
        if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
            with open(source, newline="") as fh:
                rows = list(csv.reader(fh))
        else:
            rows = list(csv.reader(io.StringIO(str(source))))
        header, body = rows[0], rows[1:]
        if not header or header[0] != "t":
            raise ValueError("CSV header must start with 't'")
        data = np.array(body, dtype=float).reshape(len(body), len(header))
        return cls(data[:, 0], data[:, 1:], tuple(header[1:]))


@dataclass(frozen=True)
class EventSpec:
    """Crossing of ``variable`` through ``threshold``.

    A sample counts as above the threshold when ``x >= threshold``.
    """

    variable: int | str
    threshold: float
    direction: str = "both"

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")


def _refine(traj: Trajectory, idx: int, threshold: float, ta: float, tb: float, rising: bool) -> float:
    # invariant: interpolant below threshold at the "before" end, at/above at the other
    lo, hi = ta, tb
    while hi - lo > 1e-9 * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        above = float(traj.interpolate(mid, idx)) >= threshold
        if above == rising:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def detect_crossings(traj: Trajectory, event: EventSpec) -> list[float]:
    """Times where the interpolated variable crosses the threshold, ascending."""
    idx = traj.index(event.variable)
    x = traj.states[:, idx]
    above = x >= event.threshold
    flips = np.nonzero(above[1:] != above[:-1])[0]
    out = []
    for k in flips:
        rising = bool(above[k + 1])
        if event.direction == "rising" and not rising:
            continue
        if event.direction == "falling" and rising:
            continue
        out.append(_refine(traj, idx, event.threshold, traj.times[k], traj.times[k + 1], rising))
    return out


def crossings(traj: Trajectory, var: int | str, threshold: float, direction: str = "both") -> list[float]:
    return detect_crossings(traj, EventSpec(var, threshold, direction))


def crossing_directions(traj: Trajectory, var: int | str, threshold: float) -> list[tuple[float, bool]]:
    """All crossings as ``(time, is_rising)`` pairs."""
    idx = traj.index(var)
    above = traj.states[:, idx] >= threshold
    flips = np.nonzero(above[1:] != above[:-1])[0]
    return [(_refine(traj, idx, threshold, traj.times[k], traj.times[k + 1], bool(above[k + 1])),
             bool(above[k + 1])) for k in flips]

