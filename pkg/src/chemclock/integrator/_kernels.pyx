# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled solver loop: polynomial right-hand side, analytic Jacobian,
Dormand-Prince 5(4) with stiffness detection, and RODAS4.

Mirrors ``_fallback.py``; see that module for the reference control flow.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, pow, isfinite, NAN
from scipy.linalg.cython_lapack cimport dgetrf, dgetrs

cnp.import_array()

cdef int OK = 0
cdef int STEP_UNDERFLOW = 1
cdef int NONFINITE = 2
cdef int NEGATIVE = 3
cdef int MAX_STEPS = 4

cdef double EPS = 2.220446049250313e-16

cdef double DP_A[42]   # row s, column j at s*6 + j
cdef double DP_E[7]
cdef double ROS_A[15]
cdef double ROS_C[15]
cdef double ROS_M[6]


def _load_tables():
    from ._fallback import _A, _E
    from ._layout import ROS_A as ra, ROS_C as rc, ROS_M as rm
    cdef int s, j
    for s in range(7):
        for j in range(len(_A[s])):
            DP_A[s * 6 + j] = _A[s][j]
    for j in range(7):
        DP_E[j] = _E[j]
    for j in range(15):
        ROS_A[j] = ra[j]
        ROS_C[j] = rc[j]
    for j in range(6):
        ROS_M[j] = rm[j]


_load_tables()

cdef double BETA = 0.04
cdef double EXPO1 = 0.2 - 0.04 * 0.75
cdef double SAFE = 0.9
cdef double FACC1 = 5.0
cdef double FACC2 = 0.1


cdef class Poly:
    cdef int n, nt
    cdef int[::1] eq, ptr, var, pw
    cdef double[::1] coef
    cdef public long nfev, njev

    def __init__(self, int n, int[::1] term_eq, double[::1] term_coef, int[::1] fac_ptr,
                 int[::1] fac_var, int[::1] fac_pow):
        self.n = n
        self.nt = term_eq.shape[0]
        self.eq = term_eq
        self.coef = term_coef
        self.ptr = fac_ptr
        self.var = fac_var
        self.pw = fac_pow
        self.nfev = 0
        self.njev = 0

    cdef inline double ipow(self, double x, int p) noexcept nogil:
        cdef double r = 1.0
        while p > 0:
            if p & 1:
                r *= x
            x *= x
            p >>= 1
        return r

    cdef void rhs(self, double* y, double* out) noexcept nogil:
        cdef int i, k, f
        cdef double m
        self.nfev += 1
        for i in range(self.n):
            out[i] = 0.0
        for k in range(self.nt):
            m = self.coef[k]
            for f in range(self.ptr[k], self.ptr[k + 1]):
                m *= self.ipow(y[self.var[f]], self.pw[f])
            out[self.eq[k]] += m

    cdef void jac(self, double* y, double* J) noexcept nogil:
        # column-major J[i + j*n]
        cdef int i, k, f, g, n = self.n
        cdef double d
        self.njev += 1
        for i in range(n * n):
            J[i] = 0.0
        for k in range(self.nt):
            for f in range(self.ptr[k], self.ptr[k + 1]):
                d = self.coef[k] * self.pw[f] * self.ipow(y[self.var[f]], self.pw[f] - 1)
                for g in range(self.ptr[k], self.ptr[k + 1]):
                    if g != f:
                        d *= self.ipow(y[self.var[g]], self.pw[g])
                J[self.eq[k] + self.var[f] * n] += d

    def py_rhs(self, double[::1] y):
        out = np.zeros(self.n)
        cdef double[::1] o = out
        if self.n:
            self.rhs(&y[0], &o[0])
        return out

    def py_jac(self, double[::1] y):
        out = np.zeros((self.n, self.n), order="F")
        cdef double[::1, :] o = out
        if self.n:
            self.jac(&y[0], &o[0, 0])
        return out


cdef double rms(int n, double* e, double* y0, double* y1, double rtol, double atol) noexcept nogil:
    cdef int i
    cdef double s = 0.0, sk, a, b
    if n == 0:
        return 0.0
    for i in range(n):
        a = fabs(y0[i])
        b = fabs(y1[i])
        sk = atol + rtol * (a if a > b else b)
        s += (e[i] / sk) * (e[i] / sk)
    return sqrt(s / n)


cdef bint all_finite(int n, double* v) noexcept nogil:
    cdef int i
    for i in range(n):
        if not isfinite(v[i]):
            return False
    return True


cdef class Out:
    cdef public object t, y, f
    cdef public Py_ssize_t m, cap
    cdef int n

    def __init__(self, int n):
        self.n = n
        self.cap = 1024
        self.m = 0
        self.t = np.empty(self.cap)
        self.y = np.empty((self.cap, n))
        self.f = np.empty((self.cap, n))

    cdef void push(self, double t, double[::1] y, double[::1] f):
        cdef double[::1] tt
        cdef double[:, ::1] yy, ff
        cdef int i
        if self.m == self.cap:
            self.cap *= 2
            self.t = np.resize(self.t, self.cap)
            self.y = np.resize(self.y, (self.cap, self.n))
            self.f = np.resize(self.f, (self.cap, self.n))
        tt = self.t
        yy = self.y
        ff = self.f
        tt[self.m] = t
        for i in range(self.n):
            yy[self.m, i] = y[i]
            ff[self.m, i] = f[i]
        self.m += 1

    def arrays(self):
        return self.t[:self.m].copy(), self.y[:self.m].copy(), self.f[:self.m].copy()


cdef double initial_step(Poly poly, double[::1] y0, double[::1] f0, double rtol, double atol,
                         double max_step, int order, double span, double[::1] tmp, double[::1] f1):
    cdef int i, n = poly.n
    cdef double d0 = 0.0, d1 = 0.0, d2 = 0.0, sk, h0, h1, dm
    if n == 0:
        return min(max_step, span)
    for i in range(n):
        sk = atol + rtol * fabs(y0[i])
        d0 += (y0[i] / sk) ** 2
        d1 += (f0[i] / sk) ** 2
    d0 = sqrt(d0 / n)
    d1 = sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, min(max_step, span))
    for i in range(n):
        tmp[i] = y0[i] + h0 * f0[i]
    poly.rhs(&tmp[0], &f1[0])
    for i in range(n):
        sk = atol + rtol * fabs(y0[i])
        d2 += ((f1[i] - f0[i]) / sk) ** 2
    d2 = sqrt(d2 / n) / h0
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = pow(0.01 / dm, 1.0 / order)
    return min(min(100 * h0, h1), min(max_step, span))


cdef bint pushes_out(int n, double* y, double* f) noexcept nogil:
    cdef int i
    for i in range(n):
        if y[i] == 0.0 and f[i] < 0.0:
            return True
    return False


def solve(int n, int[::1] term_eq, double[::1] term_coef, int[::1] fac_ptr, int[::1] fac_var,
          int[::1] fac_pow, y0, double t0, double t1, double rtol, double atol, double max_step,
          double h_init, bint implicit, bint clip, long max_steps):
    """See ``_fallback.solve``."""
    cdef Poly poly = Poly(n, term_eq, term_coef, fac_ptr, fac_var, fac_pow)
    cdef Out out = Out(n)
    cdef double[::1] y = np.array(y0, dtype=np.float64)
    cdef double[::1] f = np.zeros(n)
    cdef double[::1] y1 = np.zeros(n)
    cdef double[::1] f1 = np.zeros(n)
    cdef double[::1] ys = np.zeros(n)
    cdef double[::1] ysti = np.zeros(n)
    cdef double[::1] errv = np.zeros(n)
    cdef double[::1] rhs = np.zeros(n)
    cdef double[:, ::1] k = np.zeros((7, max(n, 1)))
    cdef double[::1, :] J = np.zeros((max(n, 1), max(n, 1)), order="F")
    cdef double[::1, :] G = np.zeros((max(n, 1), max(n, 1)), order="F")
    cdef int[::1] ipiv = np.zeros(max(n, 1), dtype=np.int32)
    cdef double t = t0, h, hnew, err, fac, fac11, facold = 1e-4, ymin, span = t1 - t0
    cdef double stnum, stden, t_switch = NAN, lu_h = -1.0, a, hg
    cdef long n_acc = 0, n_rej = 0
    cdef int status = OK, iasti = 0, nonsti = 0, s, j, i, idx, info, one = 1, order
    cdef bint stiff = implicit, last_rejected = False, reject_more = False
    cdef bint neg_reject = False, last, have_jac = False, good, clipped
    cdef char trans = b'N'

    if n == 0:
        out.push(t, y, f)
        out.push(t1, y, f)
        return (OK, *out.arrays(), (1, 0, poly.nfev, poly.njev, NAN))
    poly.rhs(&y[0], &f[0])
    out.push(t, y, f)
    if not (all_finite(n, &y[0]) and all_finite(n, &f[0])):
        return (NONFINITE, *out.arrays(), (0, 0, poly.nfev, poly.njev, NAN))

    order = 4 if implicit else 5
    if h_init > 0:
        h = h_init
    else:
        h = initial_step(poly, y, f, rtol, atol, max_step, order, span, ys, f1)
    h = min(h, max_step)
    if implicit:
        t_switch = t0

    while True:
        if t >= t1:
            break
        if n_acc + n_rej >= max_steps:
            status = MAX_STEPS
            break
        if h < 10.0 * EPS * max(fabs(t), 1.0):
            status = NEGATIVE if neg_reject else STEP_UNDERFLOW
            break
        last = t + 1.01 * h >= t1
        if last:
            h = t1 - t

        if not stiff:
            for i in range(n):
                k[0, i] = f[i]
            for s in range(1, 7):
                for i in range(n):
                    ys[i] = y[i]
                for j in range(s):
                    a = DP_A[s * 6 + j]
                    if a != 0.0:
                        for i in range(n):
                            ys[i] += h * a * k[j, i]
                if s == 5:
                    for i in range(n):
                        ysti[i] = ys[i]
                poly.rhs(&ys[0], &k[s, 0])
            for i in range(n):
                y1[i] = ys[i]
                errv[i] = 0.0
                for j in range(7):
                    errv[i] += DP_E[j] * k[j, i]
                errv[i] *= h
            err = rms(n, &errv[0], &y[0], &y1[0], rtol, atol)
            if not (all_finite(n, &y1[0]) and isfinite(err)):
                h *= 0.1
                n_rej += 1
                last_rejected = True
                continue
            fac11 = pow(err, EXPO1)
            fac = fac11 / pow(facold, BETA)
            fac = max(FACC2, min(FACC1, fac / SAFE))
            hnew = h / fac
            if err > 1.0:
                h = h / min(FACC1, fac11 / SAFE)
                n_rej += 1
                last_rejected = True
                neg_reject = False
                continue
            for i in range(n):
                f1[i] = k[6, i]
            if clip:
                ymin = y1[0]
                for i in range(1, n):
                    if y1[i] < ymin:
                        ymin = y1[i]
                if ymin < -atol:
                    h *= 0.5
                    n_rej += 1
                    last_rejected = True
                    neg_reject = True
                    continue
                if ymin < 0.0:
                    for i in range(n):
                        if y1[i] < 0.0:
                            y1[i] = 0.0
                    poly.rhs(&y1[0], &f1[0])
                    if pushes_out(n, &y1[0], &f1[0]):
                        status = NEGATIVE
                        break
            if not all_finite(n, &f1[0]):
                status = NONFINITE
                break
            stnum = 0.0
            stden = 0.0
            for i in range(n):
                stnum += (k[6, i] - k[5, i]) ** 2
                stden += (ys[i] - ysti[i]) ** 2
            if stden > 0.0 and h * sqrt(stnum / stden) > 3.25:
                nonsti = 0
                iasti += 1
            else:
                nonsti += 1
                if nonsti == 6:
                    iasti = 0
            facold = max(err, 1e-4)
            if last_rejected:
                hnew = min(hnew, h)
            t = t1 if last else t + h
            for i in range(n):
                y[i] = y1[i]
                f[i] = f1[i]
            out.push(t, y, f)
            n_acc += 1
            last_rejected = False
            neg_reject = False
            h = min(hnew, max_step)
            if iasti >= 15:
                stiff = True
                t_switch = t
                have_jac = False
            continue

        # RODAS4
        if not have_jac:
            poly.jac(&y[0], &J[0, 0])
            have_jac = True
            lu_h = -1.0
        if h != lu_h:
            hg = 1.0 / (h * 0.25)
            for j in range(n):
                for i in range(n):
                    G[i, j] = -J[i, j]
                G[j, j] += hg
            dgetrf(&n, &n, &G[0, 0], &n, &ipiv[0], &info)
            if info != 0:
                h *= 0.5
                n_rej += 1
                lu_h = -1.0
                continue
            lu_h = h
        good = True
        idx = 0
        for s in range(6):
            if s == 0:
                for i in range(n):
                    rhs[i] = f[i]
            else:
                for i in range(n):
                    ys[i] = y[i]
                for j in range(s):
                    a = ROS_A[idx + j]
                    for i in range(n):
                        ys[i] += a * k[j, i]
                poly.rhs(&ys[0], &rhs[0])
                for j in range(s):
                    a = ROS_C[idx + j] / h
                    for i in range(n):
                        rhs[i] += a * k[j, i]
                idx += s
            dgetrs(&trans, &n, &one, &G[0, 0], &n, &ipiv[0], &rhs[0], &n, &info)
            for i in range(n):
                k[s, i] = rhs[i]
            if not all_finite(n, &rhs[0]):
                good = False
                break
        if good:
            for i in range(n):
                y1[i] = y[i]
                for j in range(6):
                    y1[i] += ROS_M[j] * k[j, i]
            err = rms(n, &k[5, 0], &y[0], &y1[0], rtol, atol)
            good = isfinite(err) and all_finite(n, &y1[0])
        if not good:
            h *= 0.1
            n_rej += 1
            reject_more = last_rejected
            last_rejected = True
            continue
        if err > 0:
            fac = min(6.0, max(0.2, 0.9 / pow(err, 0.25)))
        else:
            fac = 6.0
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
            ymin = y1[0]
            for i in range(1, n):
                if y1[i] < ymin:
                    ymin = y1[i]
            if ymin < -atol:
                h *= 0.5
                n_rej += 1
                reject_more = last_rejected
                last_rejected = True
                neg_reject = True
                continue
            if ymin < 0.0:
                for i in range(n):
                    if y1[i] < 0.0:
                        y1[i] = 0.0
                clipped = True
        poly.rhs(&y1[0], &f1[0])
        if not all_finite(n, &f1[0]):
            status = NONFINITE
            break
        if clipped and pushes_out(n, &y1[0], &f1[0]):
            status = NEGATIVE
            break
        if last_rejected:
            hnew = min(hnew, h)
        t = t1 if last else t + h
        for i in range(n):
            y[i] = y1[i]
            f[i] = f1[i]
        out.push(t, y, f)
        n_acc += 1
        last_rejected = False
        reject_more = False
        neg_reject = False
        have_jac = False
        h = min(hnew, max_step)

    return (status, *out.arrays(), (n_acc, n_rej, poly.nfev, poly.njev, t_switch))


