"""Pure-Python integration kernel (fallback for the compiled ``_core``).

Mirrors ``_core.pyx`` statement for statement: the same expression-table
evaluator, the same DOP853 step and step-size controller, the same status
codes. Slow, but dependency-free beyond numpy.
"""
from __future__ import annotations

import math

import numpy as np

OK, UNDERFLOW, DOMAIN, MAXSTEPS, NONFINITE = 0, 1, 2, 3, 4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERR_EXP = -1.0 / 8.0
_TWO_PI = 2.0 * math.pi


def _sech(u):
    e = math.exp(-abs(u))
    return 2.0 * e / (1.0 + e * e)


class PySystem:
    """Perturbed penduli-rotator vector field plus DOP853 driver."""

    backend = "python"

    def __init__(self, n, d, m, signs, term_start, coef, fac_start, fac_var, fac_kind,
                 fac_a, fac_b, hamiltonian, pert_first, nu, eta_angle, tube, I_center,
                 I_radius, A, B, C, E3, E5, clock_fn=None):
        self.n, self.d, self.m = int(n), int(d), int(m)
        self.nz = 2 * self.n + 2 * self.d + self.m
        self.ny = 2 * self.n + 2 * self.d
        self.signs = [float(s) for s in signs]
        self.term_start = [int(v) for v in term_start]
        self.coef = [float(v) for v in coef]
        self.fac_start = [int(v) for v in fac_start]
        self.fac_var = [int(v) for v in fac_var]
        self.fac_kind = [int(v) for v in fac_kind]
        self.fac_a = [float(v) for v in fac_a]
        self.fac_b = [float(v) for v in fac_b]
        self.hamiltonian = bool(hamiltonian)
        self.pert_first = int(pert_first)
        self.nu = [float(v) for v in nu]
        self.eta_angle = [int(v) for v in eta_angle]
        self.tube = float(tube)
        self.I_center = [float(v) for v in I_center]
        self.I_radius = float(I_radius)
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.E3 = np.asarray(E3, dtype=float)
        self.E5 = np.asarray(E5, dtype=float)
        self.n_stages = len(self.B)
        self.clock_fn = clock_fn
        self.nfev = 0

    # expressions --------------------------------------------------------
    def _eval(self, e, z, grad):
        """Value of expression ``e``; accumulates its gradient into ``grad`` if given."""
        total = 0.0
        for t in range(self.term_start[e], self.term_start[e + 1]):
            f0, f1 = self.fac_start[t], self.fac_start[t + 1]
            nf = f1 - f0
            g = [0.0] * nf
            dg = [0.0] * nf
            for j in range(nf):
                k = f0 + j
                x = z[self.fac_var[k]]
                a, b = self.fac_a[k], self.fac_b[k]
                kind = self.fac_kind[k]
                if kind == 0:
                    g[j], dg[j] = 1.0, 0.0
                elif kind == 1:
                    mm = int(a)
                    if mm == 0:
                        g[j], dg[j] = 1.0, 0.0
                    else:
                        g[j], dg[j] = x ** mm, mm * x ** (mm - 1)
                elif kind == 2:
                    u = _TWO_PI * (a * x + b)
                    g[j], dg[j] = math.cos(u), -_TWO_PI * a * math.sin(u)
                elif kind == 3:
                    u = _TWO_PI * (a * x + b)
                    g[j], dg[j] = math.sin(u), _TWO_PI * a * math.cos(u)
                elif kind == 4:
                    u = a * x + b
                    sh = _sech(u)
                    g[j], dg[j] = sh, -a * sh * math.tanh(u)
                else:
                    r = x - b
                    gg = math.exp(-a * r * r)
                    g[j], dg[j] = gg, -2.0 * a * r * gg
            c = self.coef[t]
            prod = c
            for j in range(nf):
                prod *= g[j]
            total += prod
            if grad is not None:
                for j in range(nf):
                    part = c * dg[j]
                    for l in range(nf):
                        if l != j:
                            part *= g[l]
                    grad[self.fac_var[f0 + j]] += part
        return total

    def _fill_z(self, sigma, y, eta0, z):
        ny = self.ny
        for k in range(ny):
            z[k] = y[k]
        if self.clock_fn is not None:
            eta = self.clock_fn(eta0, sigma)
            for k in range(self.m):
                z[ny + k] = float(eta[k])
            return
        for k in range(self.m):
            v = eta0[k] + self.nu[k] * sigma
            if self.eta_angle[k]:
                v -= math.floor(v)
            z[ny + k] = v

    def rhs(self, sigma, y, eta0, eps, freeze=False):
        n, d = self.n, self.d
        z = [0.0] * self.nz
        grad = [0.0] * self.nz
        out = np.zeros(self.ny)
        self._fill_z(sigma, y, eta0, z)
        self.nfev += 1
        for i in range(n):
            qi = n + i
            grad[qi] = 0.0
            self._eval(i, z, grad)
            out[i] = -self.signs[i] * grad[qi]
            out[qi] = self.signs[i] * z[i]
        for j in range(d):
            grad[2 * n + j] = 0.0
        self._eval(n, z, grad)
        for j in range(d):
            out[2 * n + j] = 0.0
            out[2 * n + d + j] = grad[2 * n + j]
        if eps != 0.0:
            if self.hamiltonian:
                grad = [0.0] * self.nz
                self._eval(self.pert_first, z, grad)
                for i in range(n):
                    out[i] -= eps * grad[n + i]
                    out[n + i] += eps * grad[i]
                for j in range(d):
                    out[2 * n + j] -= eps * grad[2 * n + d + j]
                    out[2 * n + d + j] += eps * grad[2 * n + j]
            else:
                for k in range(self.ny):
                    out[k] += eps * self._eval(self.pert_first + k, z, None)
        if freeze:
            out[: 2 * n] = 0.0
        return out

    def energies(self, y):
        n = self.n
        z = [0.0] * self.nz
        for k in range(self.ny):
            z[k] = y[k]
        return [self.signs[i] * (0.5 * y[i] * y[i] + self._eval(i, z, None)) for i in range(n)]

    def _outside(self, y):
        if not self.tube > 0:
            return False
        for P in self.energies(y):
            if abs(P) > self.tube:
                return True
        if math.isinf(self.I_radius):
            return False
        r2 = 0.0
        for j in range(self.d):
            dv = y[2 * self.n + j] - self.I_center[j]
            r2 += dv * dv
        return r2 > self.I_radius * self.I_radius

    # DOP853 -------------------------------------------------------------
    def _step(self, s, y, f, h, eta0, eps, freeze, K):
        K[0] = f
        for st in range(1, self.n_stages):
            dy = h * (K[:st].T @ self.A[st, :st])
            K[st] = self.rhs(s + self.C[st] * h, y + dy, eta0, eps, freeze)
        y_new = y + h * (K[:-1].T @ self.B)
        f_new = self.rhs(s + h, y_new, eta0, eps, freeze)
        K[-1] = f_new
        return y_new, f_new

    def _err_norm(self, K, h, y, y_new, rtol, atol):
        scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
        e5 = (K.T @ self.E5) / scale
        e3 = (K.T @ self.E3) / scale
        n5 = float(np.dot(e5, e5))
        n3 = float(np.dot(e3, e3))
        if n5 == 0.0 and n3 == 0.0:
            return 0.0
        denom = n5 + 0.01 * n3
        return abs(h) * n5 / math.sqrt(denom * len(scale))

    def _initial_step(self, s0, y0, f0, direction, span, max_step, eta0, eps, freeze, rtol, atol):
        scale = atol + np.abs(y0) * rtol
        d0 = float(np.linalg.norm(y0 / scale)) / math.sqrt(len(y0))
        d1 = float(np.linalg.norm(f0 / scale)) / math.sqrt(len(y0))
        if d0 < 1e-5 or d1 < 1e-5:
            h0 = 1e-6
        else:
            h0 = 0.01 * d0 / d1
        h0 = min(h0, span)
        y1 = y0 + h0 * direction * f0
        f1 = self.rhs(s0 + h0 * direction, y1, eta0, eps, freeze)
        d2 = float(np.linalg.norm((f1 - f0) / scale)) / math.sqrt(len(y0)) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
        return min(100 * h0, h1, span, max_step)

    def integrate(self, y0, eta0, s0, s1, eps, rtol=1e-10, atol=1e-12, max_step=math.inf,
                  freeze=False, steps=None, record=False, max_steps=200000, check_domain=True):
        """Integrate from ``s0`` to ``s1``.

        Returns ``(y, status, s_reached, recorded_steps)``. With ``steps``
        given, replays that exact step sequence without error control.
        """
        y = np.array(y0, dtype=float)
        eta0 = [float(v) for v in eta0]
        s = float(s0)
        s1 = float(s1)
        K = np.zeros((self.n_stages + 1, self.ny))
        taken = []
        if s1 == s:
            return y, OK, s, np.zeros(0)
        direction = 1.0 if s1 > s else -1.0
        f = self.rhs(s, y, eta0, eps, freeze)
        if steps is not None:
            for h in steps:
                y, f = self._step(s, y, f, float(h), eta0, eps, freeze, K)
                s += float(h)
                if not np.all(np.isfinite(y)):
                    return y, NONFINITE, s, np.zeros(0)
            return y, OK, s, np.zeros(0)
        span = abs(s1 - s)
        h_abs = self._initial_step(s, y, f, direction, span, max_step, eta0, eps, freeze, rtol, atol)
        nsteps = 0
        while direction * (s1 - s) > 0:
            min_step = 10.0 * abs(np.nextafter(s, direction * np.inf) - s)
            h_abs = min(max(h_abs, min_step), max_step)
            rejected = False
            while True:
                if h_abs < min_step:
                    return y, UNDERFLOW, s, np.asarray(taken)
                h = h_abs * direction
                s_new = s + h
                if direction * (s_new - s1) > 0:
                    s_new = s1
                h = s_new - s
                h_abs = abs(h)
                y_new, f_new = self._step(s, y, f, h, eta0, eps, freeze, K)
                err = self._err_norm(K, h, y, y_new, rtol, atol)
                if err < 1.0:
                    if err == 0.0:
                        factor = _MAX_FACTOR
                    else:
                        factor = min(_MAX_FACTOR, _SAFETY * err ** _ERR_EXP)
                    if rejected:
                        factor = min(1.0, factor)
                    h_abs *= factor
                    break
                h_abs *= max(_MIN_FACTOR, _SAFETY * err ** _ERR_EXP)
                rejected = True
            s, y, f = s_new, y_new, f_new
            if record:
                taken.append(h)
            nsteps += 1
            if not np.all(np.isfinite(y)):
                return y, NONFINITE, s, np.asarray(taken)
            if check_domain and self._outside(y):
                return y, DOMAIN, s, np.asarray(taken)
            if nsteps >= max_steps:
                return y, MAXSTEPS, s, np.asarray(taken)
        return y, OK, s, np.asarray(taken)
