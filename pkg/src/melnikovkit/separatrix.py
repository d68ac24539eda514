"""Homoclinic loops of the pendula and the family ``(p0, q0)(tau + sigma)``.

Each loop is parameterized by its natural time ``s`` with ``s = 0`` at the
apex (largest ``|p|``). Positions are handled internally as the signed
offset ``qc`` of ``q`` from the saddle, ``qc in (-1/2, 1/2]``, which keeps
full relative precision in the tails.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .model import PenduliSpec

__all__ = [
    "SaddleData",
    "ClosedFormLoop",
    "TableLoop",
    "SeparatrixOrbit",
    "SeparatrixError",
    "build_separatrix",
    "family_point",
    "tail_bound",
]


class SeparatrixError(RuntimeError):
    """No homoclinic return was found within the time budget."""


@dataclass(frozen=True)
class SaddleData:
    """Saddle rates ``lambda_i = sqrt(-V_i''(0))``."""

    lambdas: np.ndarray

    @property
    def lambda_plus(self) -> float:
        return float(np.min(self.lambdas))


def _sech(u):
    e = np.exp(-np.abs(u))
    return 2.0 * e / (1.0 + e * e)


class ClosedFormLoop:
    """Loop of ``p^2/2 + A (cos 2 pi q - 1) = 0`` for a positive-sign pendulum.

    ``q0(s) = b (2/pi) arctan(exp(lam s))``, ``p0(s) = b 2 sqrt(A) sech(lam s)``
    with ``lam = 2 pi sqrt(A)`` and branch ``b = +-1``.
    """

    kind = "closed-form"

    def __init__(self, amplitude: float, branch: int = 1):
        self.amplitude = float(amplitude)
        self.branch = int(branch)
        self.sign = 1
        self.lam = 2.0 * np.pi * np.sqrt(self.amplitude)
        self._c = 2.0 * np.sqrt(self.amplitude)
        # sup_s max(|p|, |qc|) e^{lam |s|}, attained as |s| -> inf
        self.decay_constant = max(2.0 * self._c, 2.0 / np.pi)
        self.s_max = np.inf

    def eval(self, s):
        """``(p, qc, dp/ds, dqc/ds)`` at ``s``."""
        s = np.asarray(s, dtype=float)
        u = self.lam * s
        b = self.branch
        sh = _sech(u)
        th = np.tanh(u)
        # centred offset: arctan(e^u) for u <= 0, arctan(e^u) - pi/2 = -arctan(e^-u) otherwise
        eu = np.exp(-np.abs(u))
        qc = np.where(u <= 0, np.arctan(eu), -np.arctan(eu)) * (2.0 / np.pi) * b
        p = b * self._c * sh
        return p, qc, -b * self._c * self.lam * sh * th, p


class TableLoop:
    """Numerically continued loop stored as a cubic Hermite table.

    The loop is assembled from two half-orbits that both start a distance
    ``delta`` from the saddle: the unstable branch integrated forward and the
    stable branch integrated backward, each up to the apex. This keeps both
    ends of the table on the linear eigen-directions.
    """

    kind = "table"

    def __init__(self, spec: PenduliSpec, i: int, delta: float = 1e-8, spacing: float = 0.005,
                 budget: float = 200.0, rtol: float = 1e-13, atol: float = 1e-16):
        V = spec.potentials[i]
        sgn = spec.signs[i]
        b = spec.branches[i]
        lam = float(np.sqrt(-spec.d2V(i, 0.0)))
        self.lam, self.sign, self.branch = lam, sgn, b

        def dV(q):
            return V.grad(np.atleast_1d(q)[None, :])[0]

        def rhs(_, y):
            return [-sgn * dV(y[1])[0], sgn * y[0]]

        def near(_, y):
            qc = y[1] - np.round(y[1])
            return y[0] ** 2 + qc**2 - 1e-8

        near.terminal = True
        near.direction = -1

        def turning(_, y):
            return dV(y[1])[0]

        def half(direction):
            # unstable eigen-direction (lam, sgn) forward, stable (lam, -sgn) backward
            v = np.array([lam, direction * sgn]) / np.hypot(lam, 1.0)
            sol = solve_ivp(rhs, (0.0, direction * budget / lam), b * delta * v, method="DOP853",
                            rtol=rtol, atol=atol, events=(near, turning), dense_output=True)
            if sol.status != 1 or len(sol.t_events[0]) == 0:
                raise SeparatrixError(
                    f"pendulum {i}: no homoclinic return within {budget / lam:g} time units"
                )
            turns = np.asarray(sol.t_events[1])
            if len(turns) == 0:
                raise SeparatrixError(f"pendulum {i}: loop has no turning point")
            k = np.argmax(np.abs(sol.sol(turns)[0]))
            return sol, float(turns[k])

        fwd, ta = half(1)
        bwd, tb = half(-1)
        h = spacing / lam
        left = np.concatenate([-np.arange(0.0, ta, h)[::-1], [0.0]])
        left = np.unique(np.concatenate([[-ta], left]))
        right = np.unique(np.concatenate([np.arange(0.0, -tb, h), [-tb]]))[1:]
        pq_l = fwd.sol(left + ta)
        pq_r = bwd.sol(right + tb)
        grid = np.concatenate([left, right])
        p = np.concatenate([pq_l[0], pq_r[0]])
        q_l = pq_l[1]
        q_r = pq_r[1]
        # unwrap the stable half so q is continuous through the apex
        q_r = q_r + np.round(q_l[-1] - q_r[0])
        q = np.concatenate([q_l, q_r])
        dp = -sgn * dV(q)
        dq = sgn * p
        a_f, a_b = fwd.sol(ta), bwd.sol(tb)
        self.apex_mismatch = float(np.hypot(a_f[0] - a_b[0], (a_f[1] - a_b[1]) - np.round(a_f[1] - a_b[1])))
        self.s_lo, self.s_hi = float(grid[0]), float(grid[-1])
        self.s_max = max(-self.s_lo, self.s_hi)
        self._grid = grid
        self._p = CubicHermiteSpline(grid, p, dp)
        self._q = CubicHermiteSpline(grid, q, dq)
        # tail anchors in centred coordinates
        self._left = np.array([p[0], q[0] - np.round(q[0])])
        self._right = np.array([p[-1], q[-1] - np.round(q[-1])])
        self._q_shift = float(np.round(q[-1]))
        amp = np.maximum(np.abs(p), np.abs(q - np.round(q))) * np.exp(lam * np.abs(grid))
        self.decay_constant = float(np.max(amp))

    def eval(self, s):
        s = np.asarray(s, dtype=float)
        lam = self.lam
        inside = (s >= self.s_lo) & (s <= self.s_hi)
        sc = np.clip(s, self.s_lo, self.s_hi)
        p = self._p(sc)
        q = self._q(sc)
        dp = self._p(sc, 1)
        dq = self._q(sc, 1)
        qc = np.where(sc > 0, q - self._q_shift, q)
        wr = np.exp(-lam * np.maximum(s - self.s_hi, 0.0))
        wl = np.exp(-lam * np.maximum(self.s_lo - s, 0.0))
        right = s > self.s_hi
        left = s < self.s_lo
        p = np.where(inside, p, np.where(right, self._right[0] * wr, self._left[0] * wl))
        qc = np.where(inside, qc, np.where(right, self._right[1] * wr, self._left[1] * wl))
        dp = np.where(inside, dp, np.where(right, -lam * p, lam * p))
        dq = np.where(inside, dq, np.where(right, -lam * qc, lam * qc))
        return p, qc, dp, dq


class SeparatrixOrbit:
    """The ``n`` loops plus saddle data; immutable after construction."""

    def __init__(self, loops: Sequence, saddle: SaddleData, spec: PenduliSpec | None = None):
        self.loops = tuple(loops)
        self.saddle = saddle
        self.spec = spec
        self.apex = np.array([[lp.eval(0.0)[0], lp.eval(0.0)[1] % 1.0] for lp in self.loops])
        self.decay_constants = np.array([lp.decay_constant for lp in self.loops])

    @property
    def n(self) -> int:
        return len(self.loops)

    @property
    def lambda_plus(self) -> float:
        return self.saddle.lambda_plus

    @property
    def s_max(self) -> float:
        return float(min(lp.s_max for lp in self.loops))

    def states(self, tau, sigma):
        """``(p, qc, dp, dqc)`` at ``tau_i + sigma``, each of shape ``(n,) + sigma.shape``."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        sigma = np.asarray(sigma, dtype=float)
        out = [lp.eval(tau[i] + sigma) for i, lp in enumerate(self.loops)]
        return tuple(np.stack([o[k] for o in out]) for k in range(4))

    def tail_bound(self, sigma) -> float:
        """``2 C e^{-lambda_+ |sigma|}`` dominating ``max_i ||(p_i, qc_i)(s)||_inf`` for ``|s| >= |sigma|``."""
        sigma = np.abs(np.asarray(sigma, dtype=float))
        return 2.0 * float(np.max(self.decay_constants)) * np.exp(-self.lambda_plus * sigma)

    def to_csv(self, path, s=None):
        """Write columns ``s, p_1, q_1, ...`` (``q`` reduced mod 1)."""
        if s is None:
            s = np.linspace(-12.0, 12.0, 1201) / self.lambda_plus
        p, qc, _, _ = self.states(np.zeros(self.n), s)
        header = ["s"] + [c for i in range(self.n) for c in (f"p_{i + 1}", f"q_{i + 1}")]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, sk in enumerate(s):
                row = [repr(float(sk))]
                for i in range(self.n):
                    row += [repr(float(p[i, k])), repr(float(qc[i, k] % 1.0))]
                w.writerow(row)


def build_separatrix(spec: PenduliSpec, numeric: bool = False, **table_options) -> SeparatrixOrbit:
    """Build the homoclinic family for ``spec``.

    Parameters
    ----------
    spec : PenduliSpec
    numeric : bool
        Force numeric continuation even for cosine potentials.
    **table_options
        Forwarded to :class:`TableLoop` (``delta``, ``spacing``, ``budget``).
    """
    loops = []
    for i in range(spec.n):
        amp = spec.cosine_amplitude(i)
        if amp is not None and spec.signs[i] == 1 and not numeric:
            loops.append(ClosedFormLoop(amp, spec.branches[i]))
        else:
            loops.append(TableLoop(spec, i, **table_options))
    lambdas = np.sqrt(-np.array([spec.d2V(i, 0.0) for i in range(spec.n)], dtype=float))
    return SeparatrixOrbit(loops, SaddleData(lambdas), spec)


def family_point(orb: SeparatrixOrbit, tau, sigma: float):
    """``(p0_i(tau_i + sigma), q0_i(tau_i + sigma))`` with ``q`` in ``[0, 1)``."""
    p, qc, _, _ = orb.states(tau, float(sigma))
    return p, np.mod(qc, 1.0)


def tail_bound(orb: SeparatrixOrbit, sigma: float) -> float:
    return orb.tail_bound(sigma)
