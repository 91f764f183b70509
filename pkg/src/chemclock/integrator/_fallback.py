"""Pure-Python solver loop (numpy/scipy), used when the compiled kernel is unavailable.

The control flow mirrors ``_kernels.pyx`` line for line so the two backends
accept and reject the same steps up to floating-point rounding.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ._layout import (MAX_STEPS, NEGATIVE, NONFINITE, OK, ROS_A, ROS_C, ROS_GAMMA, ROS_M,
                      STEP_UNDERFLOW, CompiledSystem)

# Dormand-Prince 5(4)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_BETA = 0.04
_EXPO1 = 0.2 - _BETA * 0.75
_SAFE = 0.9
_FACC1 = 5.0    # 1 / min shrink factor 0.2
_FACC2 = 0.1    # 1 / max growth factor 10
_STIFF_HLAMB = 3.25
_STIFF_HITS = 15
_NONSTIFF_RESET = 6
_EPS = np.finfo(float).eps


class _Poly:
    """Vectorized evaluator of a compiled polynomial system."""

    def __init__(self, cs: CompiledSystem):
        self.n = cs.n
        self.eq = cs.term_eq.astype(np.intp)
        self.coef = cs.term_coef
        self.exp = cs.exponent_matrix().astype(float)
        self.expm1 = np.maximum(self.exp - 1.0, 0.0)
        self.nfev = 0
        self.njev = 0

    def rhs(self, y):
        self.nfev += 1
        mono = self.coef * np.prod(y ** self.exp, axis=1)
        return np.bincount(self.eq, weights=mono, minlength=self.n)

    def jac(self, y):
        self.njev += 1
        n = self.n
        jac = np.zeros((n, n))
        if not len(self.coef):
            return jac
        pw = y ** self.exp
        for j in range(n):
            col = self.exp[:, j]
            if not col.any():
                continue
            q = pw.copy()
            q[:, j] = col * y[j] ** self.expm1[:, j]
            jac[:, j] = np.bincount(self.eq, weights=self.coef * np.prod(q, axis=1), minlength=n)
        return jac


def _rms(err, y0, y1, rtol, atol):
    sk = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return math.sqrt(np.mean((err / sk) ** 2)) if len(err) else 0.0


def _initial_step(poly, t0, y0, f0, rtol, atol, max_step, order, direction_span):
    sk = atol + rtol * np.abs(y0)
    n = len(y0)
    if n == 0:
        return min(max_step, direction_span)
    d0 = math.sqrt(np.mean((y0 / sk) ** 2))
    d1 = math.sqrt(np.mean((f0 / sk) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step, direction_span)
    f1 = poly.rhs(y0 + h0 * f0)
    d2 = math.sqrt(np.mean(((f1 - f0) / sk) ** 2)) / h0
    dm = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if dm <= 1e-15 else (0.01 / dm) ** (1.0 / order)
    return min(100 * h0, h1, max_step, direction_span)


class _Output:
    def __init__(self, n):
        self.cap = 1024
        self.m = 0
        self.t = np.empty(self.cap)
        self.y = np.empty((self.cap, n))
        self.f = np.empty((self.cap, n))

    def push(self, t, y, f):
        if self.m == self.cap:
            self.cap *= 2
            self.t = np.resize(self.t, self.cap)
            self.y = np.resize(self.y, (self.cap, self.y.shape[1]))
            self.f = np.resize(self.f, (self.cap, self.f.shape[1]))
        self.t[self.m] = t
        self.y[self.m] = y
        self.f[self.m] = f
        self.m += 1

    def arrays(self):
        return self.t[:self.m].copy(), self.y[:self.m].copy(), self.f[:self.m].copy()


def _pushes_out(y, f) -> bool:
    # a component held at zero with a negative derivative would be clipped forever;
    # mass-action fields never do this, since negative terms carry the species itself
    return bool(np.any((y == 0.0) & (f < 0.0)))


def solve(cs: CompiledSystem, y0, t0: float, t1: float, rtol: float, atol: float, max_step: float,
          h_init: float, implicit: bool, clip: bool, max_steps: int):
    """Integrate from t0 to t1.

    Returns:
        ``(status, times, states, derivatives, stats)`` where ``stats`` is
        ``(n_accepted, n_rejected, n_fev, n_jev, t_switch)``; ``t_switch`` is
        the time the implicit method took over, or NaN.
    """
    poly = _Poly(cs)
    n = cs.n
    y = np.array(y0, dtype=float)
    t = float(t0)
    out = _Output(n)
    f = poly.rhs(y)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f))):
        out.push(t, y, f)
        return (NONFINITE, *out.arrays(), (0, 0, poly.nfev, poly.njev, math.nan))
    out.push(t, y, f)

    span = t1 - t0
    order = 4 if implicit else 5
    h = h_init if h_init > 0 else _initial_step(poly, t, y, f, rtol, atol, max_step, order, span)
    h = min(h, max_step)
    stiff = bool(implicit)
    t_switch = t0 if implicit else math.nan
    n_acc = n_rej = 0
    facold = 1e-4
    iasti = nonsti = 0
    last_rejected = False
    reject_more = False
    neg_reject = False
    status = OK
    jac = None
    lu = None
    lu_h = -1.0
    k = np.empty((7, n))

    while True:
        if t >= t1:
            break
        if n_acc + n_rej >= max_steps:
            status = MAX_STEPS
            break
        if h < 10.0 * _EPS * max(abs(t), 1.0):
            status = NEGATIVE if neg_reject else STEP_UNDERFLOW
            break
        last = t + 1.01 * h >= t1
        if last:
            h = t1 - t

        if not stiff:
            # Dormand-Prince trial step; k[0] holds f(y)
            k[0] = f
            for s in range(1, 7):
                ys = y.copy()
                for j, a in enumerate(_A[s]):
                    if a:
                        ys += h * a * k[j]
                if s == 5:
                    ysti = ys
                k[s] = poly.rhs(ys)
            y1 = ys
            errv = h * (_E @ k)
            err = _rms(errv, y, y1, rtol, atol)
            finite = np.all(np.isfinite(y1)) and math.isfinite(err)
            if not finite:
                h *= 0.1
                n_rej += 1
                last_rejected = True
                continue
            fac11 = err ** _EXPO1
            fac = fac11 / facold ** _BETA
            fac = max(_FACC2, min(_FACC1, fac / _SAFE))
            hnew = h / fac
            if err > 1.0:
                h = h / min(_FACC1, fac11 / _SAFE)
                n_rej += 1
                last_rejected = True
                neg_reject = False
                continue
            f1 = k[6]
            if clip:
                ymin = y1.min() if n else 0.0
                if ymin < -atol:
                    h *= 0.5
                    n_rej += 1
                    last_rejected = True
                    neg_reject = True
                    continue
                if ymin < 0.0:
                    y1 = np.maximum(y1, 0.0)
                    f1 = poly.rhs(y1)
                    if _pushes_out(y1, f1):
                        status = NEGATIVE
                        break
            if not np.all(np.isfinite(f1)):
                status = NONFINITE
                break
            # stiffness detection on the accepted step
            stnum = float(np.sum((k[6] - k[5]) ** 2))
            stden = float(np.sum((ys - ysti) ** 2))
            if stden > 0.0 and h * math.sqrt(stnum / stden) > _STIFF_HLAMB:
                nonsti = 0
                iasti += 1
            else:
                nonsti += 1
                if nonsti == _NONSTIFF_RESET:
                    iasti = 0
            facold = max(err, 1e-4)
            if last_rejected:
                hnew = min(hnew, h)
            t = t1 if last else t + h
            y, f = y1, f1.copy()
            out.push(t, y, f)
            n_acc += 1
            last_rejected = False
            neg_reject = False
            h = min(hnew, max_step)
            if iasti >= _STIFF_HITS:
                stiff = True
                t_switch = t
                jac = None
            continue

        # RODAS4 trial step
        if jac is None:
            jac = poly.jac(y)
            lu_h = -1.0
        if h != lu_h:
            g = np.eye(n) / (h * ROS_GAMMA) - jac
            try:
                lu = lu_factor(g, check_finite=True)
            except (ValueError, np.linalg.LinAlgError):
                lu = None
            if lu is None or np.any(lu[0].diagonal() == 0.0):
                h *= 0.5
                n_rej += 1
                lu_h = -1.0
                continue
            lu_h = h
        kk = np.empty((6, n))
        ok = True
        idx = 0
        for s in range(6):
            if s == 0:
                rhs = f.copy()
            else:
                ys = y.copy()
                for j in range(s):
                    ys += ROS_A[idx + j] * kk[j]
                rhs = poly.rhs(ys)
                for j in range(s):
                    rhs += (ROS_C[idx + j] / h) * kk[j]
                idx += s
            kk[s] = lu_solve(lu, rhs, check_finite=False)
            if not np.all(np.isfinite(kk[s])):
                ok = False
                break
        if ok:
            y1 = y + ROS_M @ kk
            err = _rms(kk[5], y, y1, rtol, atol)
            ok = math.isfinite(err) and np.all(np.isfinite(y1))
        if not ok:
            h *= 0.1
            n_rej += 1
            reject_more = last_rejected
            last_rejected = True
            continue
        fac = min(6.0, max(0.2, 0.9 / err ** 0.25)) if err > 0 else 6.0
        hnew = h * fac
        if err > 1.0:
            h = h * 0.1 if reject_more else hnew
            n_rej += 1
            reject_more = last_rejected
            last_rejected = True
            neg_reject = False
            continue
        clipped = False
        if clip:
            ymin = y1.min() if n else 0.0
            if ymin < -atol:
                h *= 0.5
                n_rej += 1
                reject_more = last_rejected
                last_rejected = True
                neg_reject = True
                continue
            if ymin < 0.0:
                y1 = np.maximum(y1, 0.0)
                clipped = True
        f1 = poly.rhs(y1)
        if not np.all(np.isfinite(f1)):
            status = NONFINITE
            break
        if clipped and _pushes_out(y1, f1):
            status = NEGATIVE
            break
        if last_rejected:
            hnew = min(hnew, h)
        t = t1 if last else t + h
        y, f = y1, f1
        out.push(t, y, f)
        n_acc += 1
        last_rejected = reject_more = neg_reject = False
        jac = None
        h = min(hnew, max_step)

    return (status, *out.arrays(), (n_acc, n_rej, poly.nfev, poly.njev, t_switch))
