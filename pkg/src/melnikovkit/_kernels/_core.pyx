# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integration kernel: expression tables, vector field and DOP853.

Statement-level mirror of ``_pycore.py``; see that module for the reference
semantics. The Python-visible interface is identical.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, exp, tanh, fabs, sqrt, floor, pow, isfinite, INFINITY, nextafter

cnp.import_array()

cdef enum:
    MAXF = 16

cdef int OK = 0, UNDERFLOW = 1, DOMAIN = 2, MAXSTEPS = 3, NONFINITE = 4
cdef double TWO_PI = 6.283185307179586
cdef double SAFETY = 0.9, MIN_FACTOR = 0.2, MAX_FACTOR = 10.0, ERR_EXP = -0.125


cdef inline double _sech(double u) nogil:
    cdef double e = exp(-fabs(u))
    return 2.0 * e / (1.0 + e * e)


cdef class CSystem:
    cdef public int n, d, m, nz, ny, n_stages, hamiltonian, pert_first
    cdef public long nfev
    cdef int[::1] term_start, fac_start, fac_var, fac_kind, eta_angle
    cdef double[::1] coef, fac_a, fac_b, signs, nu, I_center
    cdef double tube, I_radius
    cdef double[:, ::1] A
    cdef double[::1] B, C, E3, E5
    cdef double[::1] z, grad, eta0
    cdef double[:, ::1] K
    cdef double[::1] ytmp, ynew, fnew, f, y, e5, e3

    def __init__(self, n, d, m, signs, term_start, coef, fac_start, fac_var, fac_kind,
                 fac_a, fac_b, hamiltonian, pert_first, nu, eta_angle, tube, I_center,
                 I_radius, A, B, C, E3, E5, clock_fn=None):
        if clock_fn is not None:
            raise ValueError("compiled kernel supports linear clocks only")
        self.n = n
        self.d = d
        self.m = m
        self.nz = 2 * n + 2 * d + m
        self.ny = 2 * n + 2 * d
        self.signs = np.ascontiguousarray(signs, dtype=float)
        self.term_start = np.ascontiguousarray(term_start, dtype=np.intc)
        self.coef = np.ascontiguousarray(coef, dtype=float)
        self.fac_start = np.ascontiguousarray(fac_start, dtype=np.intc)
        self.fac_var = np.ascontiguousarray(fac_var, dtype=np.intc)
        self.fac_kind = np.ascontiguousarray(fac_kind, dtype=np.intc)
        self.fac_a = np.ascontiguousarray(fac_a, dtype=float)
        self.fac_b = np.ascontiguousarray(fac_b, dtype=float)
        self.hamiltonian = 1 if hamiltonian else 0
        self.pert_first = pert_first
        self.nu = np.ascontiguousarray(nu, dtype=float)
        self.eta_angle = np.ascontiguousarray(eta_angle, dtype=np.intc)
        self.tube = tube
        self.I_center = np.ascontiguousarray(I_center, dtype=float)
        self.I_radius = I_radius
        self.A = np.ascontiguousarray(A, dtype=float)
        self.B = np.ascontiguousarray(B, dtype=float)
        self.C = np.ascontiguousarray(C, dtype=float)
        self.E3 = np.ascontiguousarray(E3, dtype=float)
        self.E5 = np.ascontiguousarray(E5, dtype=float)
        self.n_stages = len(B)
        self.z = np.zeros(self.nz)
        self.grad = np.zeros(self.nz)
        self.eta0 = np.zeros(max(m, 1))
        self.K = np.zeros((self.n_stages + 1, self.ny))
        self.ytmp = np.zeros(self.ny)
        self.ynew = np.zeros(self.ny)
        self.fnew = np.zeros(self.ny)
        self.f = np.zeros(self.ny)
        self.y = np.zeros(self.ny)
        self.e5 = np.zeros(self.ny)
        self.e3 = np.zeros(self.ny)
        self.nfev = 0

    @property
    def backend(self):
        return "cython"

    cdef double _eval(self, int e, double* z, double* grad) nogil:
        cdef double total = 0.0, prod, part, x, a, b, u, sh, r, gg, c
        cdef double g[MAXF]
        cdef double dg[MAXF]
        cdef int t, j, l, k, f0, f1, nf, kind, mm
        for t in range(self.term_start[e], self.term_start[e + 1]):
            f0 = self.fac_start[t]
            f1 = self.fac_start[t + 1]
            nf = f1 - f0
            for j in range(nf):
                k = f0 + j
                x = z[self.fac_var[k]]
                a = self.fac_a[k]
                b = self.fac_b[k]
                kind = self.fac_kind[k]
                if kind == 0:
                    g[j] = 1.0
                    dg[j] = 0.0
                elif kind == 1:
                    mm = <int>a
                    if mm == 0:
                        g[j] = 1.0
                        dg[j] = 0.0
                    else:
                        g[j] = pow(x, mm)
                        dg[j] = mm * pow(x, mm - 1)
                elif kind == 2:
                    u = TWO_PI * (a * x + b)
                    g[j] = cos(u)
                    dg[j] = -TWO_PI * a * sin(u)
                elif kind == 3:
                    u = TWO_PI * (a * x + b)
                    g[j] = sin(u)
                    dg[j] = TWO_PI * a * cos(u)
                elif kind == 4:
                    u = a * x + b
                    sh = _sech(u)
                    g[j] = sh
                    dg[j] = -a * sh * tanh(u)
                else:
                    r = x - b
                    gg = exp(-a * r * r)
                    g[j] = gg
                    dg[j] = -2.0 * a * r * gg
            c = self.coef[t]
            prod = c
            for j in range(nf):
                prod *= g[j]
            total += prod
            if grad != NULL:
                for j in range(nf):
                    part = c * dg[j]
                    for l in range(nf):
                        if l != j:
                            part *= g[l]
                    grad[self.fac_var[f0 + j]] += part
        return total

    cdef void _rhs(self, double sigma, double* y, double eps, int freeze, double* out) nogil:
        cdef int n = self.n, d = self.d, i, j, k, ny = self.ny
        cdef double* z = &self.z[0]
        cdef double* grad = &self.grad[0]
        cdef double v
        for k in range(ny):
            z[k] = y[k]
        for k in range(self.m):
            v = self.eta0[k] + self.nu[k] * sigma
            if self.eta_angle[k]:
                v -= floor(v)
            z[ny + k] = v
        self.nfev += 1
        for i in range(n):
            grad[n + i] = 0.0
            self._eval(i, z, grad)
            out[i] = -self.signs[i] * grad[n + i]
            out[n + i] = self.signs[i] * z[i]
        for j in range(d):
            grad[2 * n + j] = 0.0
        self._eval(n, z, grad)
        for j in range(d):
            out[2 * n + j] = 0.0
            out[2 * n + d + j] = grad[2 * n + j]
        if eps != 0.0:
            if self.hamiltonian:
                for k in range(self.nz):
                    grad[k] = 0.0
                self._eval(self.pert_first, z, grad)
                for i in range(n):
                    out[i] -= eps * grad[n + i]
                    out[n + i] += eps * grad[i]
                for j in range(d):
                    out[2 * n + j] -= eps * grad[2 * n + d + j]
                    out[2 * n + d + j] += eps * grad[2 * n + j]
            else:
                for k in range(ny):
                    out[k] += eps * self._eval(self.pert_first + k, z, NULL)
        if freeze:
            for k in range(2 * n):
                out[k] = 0.0

    def rhs(self, double sigma, y, eta0, double eps, freeze=False):
        cdef double[::1] yy = np.ascontiguousarray(y, dtype=float)
        out = np.zeros(self.ny)
        cdef double[::1] oo = out
        self._set_eta(eta0)
        self._rhs(sigma, &yy[0], eps, 1 if freeze else 0, &oo[0])
        return out

    def energies(self, y):
        cdef double[::1] yy = np.ascontiguousarray(y, dtype=float)
        cdef int k
        for k in range(self.ny):
            self.z[k] = yy[k]
        return [self.signs[i] * (0.5 * yy[i] * yy[i] + self._eval(i, &self.z[0], NULL))
                for i in range(self.n)]

    cdef void _set_eta(self, eta0):
        cdef int k
        e = np.asarray(eta0, dtype=float)
        for k in range(self.m):
            self.eta0[k] = e[k]

    cdef int _outside(self, double* y) nogil:
        cdef int i, j, k
        cdef double P, r2 = 0.0, dv
        if not self.tube > 0:
            return 0
        for k in range(self.ny):
            self.z[k] = y[k]
        for i in range(self.n):
            P = self.signs[i] * (0.5 * y[i] * y[i] + self._eval(i, &self.z[0], NULL))
            if fabs(P) > self.tube:
                return 1
        if self.I_radius == INFINITY:
            return 0
        for j in range(self.d):
            dv = y[2 * self.n + j] - self.I_center[j]
            r2 += dv * dv
        return 1 if r2 > self.I_radius * self.I_radius else 0

    cdef void _step(self, double s, double* y, double* f, double h, double eps, int freeze,
                    double* y_new, double* f_new) nogil:
        cdef int st, k, l, ny = self.ny
        cdef double acc
        for k in range(ny):
            self.K[0, k] = f[k]
        for st in range(1, self.n_stages):
            for k in range(ny):
                acc = 0.0
                for l in range(st):
                    acc += self.K[l, k] * self.A[st, l]
                self.ytmp[k] = y[k] + h * acc
            self._rhs(s + self.C[st] * h, &self.ytmp[0], eps, freeze, &self.K[st, 0])
        for k in range(ny):
            acc = 0.0
            for l in range(self.n_stages):
                acc += self.K[l, k] * self.B[l]
            y_new[k] = y[k] + h * acc
        self._rhs(s + h, y_new, eps, freeze, f_new)
        for k in range(ny):
            self.K[self.n_stages, k] = f_new[k]

    cdef double _err_norm(self, double h, double* y, double* y_new, double rtol, double atol) nogil:
        cdef int k, l, ny = self.ny
        cdef double sc, a5, a3, n5 = 0.0, n3 = 0.0, denom
        for k in range(ny):
            sc = atol + rtol * (fabs(y[k]) if fabs(y[k]) > fabs(y_new[k]) else fabs(y_new[k]))
            a5 = 0.0
            a3 = 0.0
            for l in range(self.n_stages + 1):
                a5 += self.K[l, k] * self.E5[l]
                a3 += self.K[l, k] * self.E3[l]
            a5 /= sc
            a3 /= sc
            n5 += a5 * a5
            n3 += a3 * a3
        if n5 == 0.0 and n3 == 0.0:
            return 0.0
        denom = n5 + 0.01 * n3
        return fabs(h) * n5 / sqrt(denom * ny)

    cdef double _initial_step(self, double s0, double* y0, double* f0, double direction,
                              double span, double max_step, double eps, int freeze,
                              double rtol, double atol):
        cdef int k, ny = self.ny
        cdef double sc, d0 = 0.0, d1 = 0.0, d2 = 0.0, h0, h1, t
        for k in range(ny):
            sc = atol + fabs(y0[k]) * rtol
            d0 += (y0[k] / sc) ** 2
            d1 += (f0[k] / sc) ** 2
        d0 = sqrt(d0 / ny)
        d1 = sqrt(d1 / ny)
        if d0 < 1e-5 or d1 < 1e-5:
            h0 = 1e-6
        else:
            h0 = 0.01 * d0 / d1
        if span < h0:
            h0 = span
        for k in range(ny):
            self.ytmp[k] = y0[k] + h0 * direction * f0[k]
        self._rhs(s0 + h0 * direction, &self.ytmp[0], eps, freeze, &self.fnew[0])
        for k in range(ny):
            sc = atol + fabs(y0[k]) * rtol
            d2 += ((self.fnew[k] - f0[k]) / sc) ** 2
        d2 = sqrt(d2 / ny) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = h0 * 1e-3
            if h1 < 1e-6:
                h1 = 1e-6
        else:
            t = d1 if d1 > d2 else d2
            h1 = pow(0.01 / t, 1.0 / 8.0)
        t = 100 * h0
        if h1 < t:
            t = h1
        if span < t:
            t = span
        if max_step < t:
            t = max_step
        return t

    def integrate(self, y0, eta0, double s0, double s1, double eps, double rtol=1e-10,
                  double atol=1e-12, double max_step=INFINITY, freeze=False, steps=None,
                  record=False, long max_steps=200000, check_domain=True):
        cdef int ny = self.ny, k, fr = 1 if freeze else 0, rej
        cdef int chk = 1 if check_domain else 0
        cdef double s = s0, direction, span, h_abs, h, s_new, err, factor, min_step
        cdef long nsteps = 0, idx
        cdef double[::1] hs
        cdef double* y
        cdef double* f
        cdef double* yn
        cdef double* fn
        self._set_eta(eta0)
        yarr = np.array(y0, dtype=float)
        cdef double[::1] yv = yarr
        for k in range(ny):
            self.y[k] = yv[k]
        y = &self.y[0]
        f = &self.f[0]
        yn = &self.ynew[0]
        fn = &self.fnew[0]
        taken = []
        if s1 == s0:
            return yarr, OK, s0, np.zeros(0)
        direction = 1.0 if s1 > s0 else -1.0
        self._rhs(s, y, eps, fr, f)
        if steps is not None:
            hs = np.ascontiguousarray(steps, dtype=float)
            for idx in range(hs.shape[0]):
                h = hs[idx]
                self._step(s, y, f, h, eps, fr, yn, fn)
                s += h
                for k in range(ny):
                    y[k] = yn[k]
                    f[k] = fn[k]
                if not isfinite(y[0]):
                    break
            out = np.array(<double[:ny]> y)
            return out, (OK if np.all(np.isfinite(out)) else NONFINITE), s, np.zeros(0)
        span = fabs(s1 - s)
        h_abs = self._initial_step(s, y, f, direction, span, max_step, eps, fr, rtol, atol)
        while direction * (s1 - s) > 0:
            min_step = 10.0 * fabs(nextafter(s, direction * INFINITY) - s)
            if h_abs < min_step:
                h_abs = min_step
            if h_abs > max_step:
                h_abs = max_step
            rej = 0
            while True:
                if h_abs < min_step:
                    return np.array(<double[:ny]> y), UNDERFLOW, s, np.asarray(taken)
                h = h_abs * direction
                s_new = s + h
                if direction * (s_new - s1) > 0:
                    s_new = s1
                h = s_new - s
                h_abs = fabs(h)
                self._step(s, y, f, h, eps, fr, yn, fn)
                err = self._err_norm(h, y, yn, rtol, atol)
                if err < 1.0:
                    if err == 0.0:
                        factor = MAX_FACTOR
                    else:
                        factor = SAFETY * pow(err, ERR_EXP)
                        if factor > MAX_FACTOR:
                            factor = MAX_FACTOR
                    if rej and factor > 1.0:
                        factor = 1.0
                    h_abs *= factor
                    break
                factor = SAFETY * pow(err, ERR_EXP)
                if factor < MIN_FACTOR:
                    factor = MIN_FACTOR
                h_abs *= factor
                rej = 1
            s = s_new
            for k in range(ny):
                y[k] = yn[k]
                f[k] = fn[k]
            if record:
                taken.append(h)
            nsteps += 1
            for k in range(ny):
                if not isfinite(y[k]):
                    return np.array(<double[:ny]> y), NONFINITE, s, np.asarray(taken)
            if chk and self._outside(y):
                return np.array(<double[:ny]> y), DOMAIN, s, np.asarray(taken)
            if nsteps >= max_steps:
                return np.array(<double[:ny]> y), MAXSTEPS, s, np.asarray(taken)
        return np.array(<double[:ny]> y), OK, s, np.asarray(taken)
