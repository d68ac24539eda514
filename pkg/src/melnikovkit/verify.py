"""Direct-integration checks of the first-order predictions.

Graph values
    Near the homoclinic loop each pendulum is described by its energy
    ``P_i`` and the loop phase ``tau_i``. The stable manifold of the annulus
    ``{p = q = 0}`` is a graph ``P = Psi_s(tau, I, phi, eta)``; it is found
    by shooting: the orbit from the chart point must reach the saddle along
    its stable direction, i.e. the linear unstable coordinate
    ``u_i = p_i + s_i lambda_i q_i`` must vanish at the horizon
    ``T = c log(1/|eps|) / lambda_+``. The unstable graph mirrors this
    backwards in time with the stable coordinate ``p_i - s_i lambda_i q_i``.

Action jump
    From a perturbed homoclinic point the orbit is followed for time ``T``
    forward (and backward), projected onto ``p = q = 0`` and brought back to
    time 0 with the dynamics restricted to the annulus. The difference of
    the two actions obtained is the asymptotic jump ``I(x+) - I(x-)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from . import _kernels
from .melnikov import (
    DEFAULT_TOL,
    CriticalPoint,
    H3Failure,
    grad_phi_potential,
    melnikov_vector,
    reduced_potential,
)
from .model import AugmentedState, DomainError, SystemConfig, pendulum_energy
from .separatrix import SeparatrixOrbit

__all__ = [
    "IntegratorConfig",
    "GraphPoint",
    "OrderFit",
    "SplittingReport",
    "JumpReport",
    "JumpSweep",
    "IntegrationError",
    "ShootingError",
    "ChartError",
    "integrate",
    "chart_to_state",
    "state_to_chart",
    "stable_graph_value",
    "unstable_graph_value",
    "measure_splitting",
    "action_jump",
    "jump_sweep",
    "fit_order",
]


class IntegrationError(RuntimeError):
    """The integrator failed (step-size underflow, step budget, overflow)."""


class ShootingError(RuntimeError):
    """Newton shooting for a graph value failed."""


class ChartError(ValueError):
    """Point outside the energy-phase chart around the loop."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Adaptive DOP853 (order 8, embedded 5/3 error estimate) settings."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_step: float = np.inf
    max_steps: int = 200000
    backend: str | None = None
    method: str = "DOP853"


@dataclass(frozen=True)
class GraphPoint:
    """Value of the stable or unstable graph at ``(tau, I, phi, eta)``."""

    kind: str
    tau: np.ndarray
    I: np.ndarray
    phi: np.ndarray
    eta: np.ndarray
    P: np.ndarray
    horizon: float
    shoot_residual: float
    iterations: int

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "coords": {"tau": self.tau.tolist(), "I": self.I.tolist(), "phi": self.phi.tolist(),
                       "eta": self.eta.tolist()},
            "P": self.P.tolist(),
            "horizon": self.horizon,
            "shoot_residual": self.shoot_residual,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class OrderFit:
    """Least-squares slope of ``log|residual|`` against ``log eps``."""

    slope: float
    stderr: float
    intercept: float
    points: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "intercept": self.intercept,
                "points": self.points}


@dataclass(frozen=True)
class SplittingReport:
    eps: np.ndarray
    measured: np.ndarray
    predicted: np.ndarray
    residual: np.ndarray
    fit: OrderFit | None
    stable: tuple[GraphPoint, ...] = ()
    unstable: tuple[GraphPoint, ...] = ()

    def to_dict(self) -> dict:
        return {
            "eps": self.eps.tolist(),
            "measured": self.measured.tolist(),
            "predicted": self.predicted.tolist(),
            "residual": self.residual.tolist(),
            "fit": None if self.fit is None else self.fit.to_dict(),
        }


@dataclass(frozen=True)
class JumpReport:
    """Measured and first-order action jump at one ``eps``.

    ``predicted`` is ``+eps * dM*/dtheta`` evaluated at ``x-``;
    ``predicted_opposite`` carries the opposite sign for comparison.
    """

    eps: float
    measured: np.ndarray
    predicted: np.ndarray
    residual: np.ndarray
    dtheta: np.ndarray
    tau_h: np.ndarray
    I_minus: np.ndarray
    phi_minus: np.ndarray
    I_plus: np.ndarray
    phi_plus: np.ndarray
    horizon: float
    predicted_opposite: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def relative_error(self) -> float:
        den = float(np.max(np.abs(self.predicted)))
        return float(np.max(np.abs(self.residual))) / den if den > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "measured": self.measured.tolist(),
            "predicted": self.predicted.tolist(),
            "residual": self.residual.tolist(),
            "dtheta": self.dtheta.tolist(),
            "tau_h": self.tau_h.tolist(),
            "x_minus": {"I": self.I_minus.tolist(), "phi": self.phi_minus.tolist()},
            "x_plus": {"I": self.I_plus.tolist(), "phi": self.phi_plus.tolist()},
            "horizon": self.horizon,
        }


@dataclass(frozen=True)
class JumpSweep:
    reports: tuple[JumpReport, ...]
    fit: OrderFit | None

    def to_dict(self) -> dict:
        return {"reports": [r.to_dict() for r in self.reports],
                "fit": None if self.fit is None else self.fit.to_dict()}


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------
@lru_cache(maxsize=64)
def _kernel(cfg: SystemConfig, backend: str | None):
    return _kernels.make_system(cfg, backend)


def _run(cfg, icfg, y0, eta, s0, s1, eps, *, freeze=False, steps=None, record=False,
         check_domain=True):
    kern = _kernel(cfg, icfg.backend)
    y, status, s, taken = kern.integrate(
        np.asarray(y0, dtype=float), np.atleast_1d(np.asarray(eta, dtype=float)), float(s0),
        float(s1), float(eps), icfg.rel_tol, icfg.abs_tol, icfg.max_step, freeze, steps, record,
        icfg.max_steps, check_domain,
    )
    if status == _kernels.DOMAIN:
        raise DomainError(f"orbit left the domain at time {s:.6g}")
    if status != _kernels.OK:
        raise IntegrationError(f"{_kernels.STATUS_TEXT[status]} at time {s:.6g}")
    return y, taken


def integrate(cfg: SystemConfig, state: AugmentedState, t0: float, t1: float, eps: float,
              icfg: IntegratorConfig | None = None) -> AugmentedState:
    """Flow ``state`` (given at time ``t0``) to time ``t1`` with parameter ``eps``.

    ``state.eta`` is the clock state at ``t0``; the returned state carries
    the advanced clock ``chi^(t1 - t0)(eta)``.
    """
    icfg = icfg or IntegratorConfig()
    span = float(t1) - float(t0)
    y, _ = _run(cfg, icfg, state.dynamic_vector(), state.eta, 0.0, span, eps)
    return AugmentedState.from_vector(y, cfg.n, cfg.d, cfg.clock.advance(state.eta, span))


# --------------------------------------------------------------------------
# energy-phase chart
# --------------------------------------------------------------------------
def _loop_energy(spec, i, p, qc):
    return pendulum_energy(spec, i, p, qc)


def _chart_offsets(orb: SeparatrixOrbit, P, tau, min_grad: float = 1e-10):
    """``(p, qc)`` of the chart points, shape ``(n,)`` each."""
    spec = orb.spec
    n = orb.n
    P = np.atleast_1d(np.asarray(P, dtype=float))
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    p0, q0, _, _ = orb.states(tau, 0.0)
    p_out = np.empty(n)
    q_out = np.empty(n)
    for i in range(n):
        s = spec.signs[i]
        gp = s * p0[i]
        gq = s * float(spec.dV(i, q0[i]))
        g = np.hypot(gp, gq)
        if g < min_grad:
            raise ChartError(f"chart degenerates near the saddle (|grad P_{i + 1}| = {g:.2e})")
        e = np.array([gp, gq]) / g

        def resid(a):
            return float(_loop_energy(spec, i, p0[i] + a * e[0], q0[i] + a * e[1])) - P[i]

        a = P[i] / g
        for _ in range(50):
            r = resid(a)
            if abs(r) <= 1e-15 * max(1.0, abs(P[i])) + 1e-17:
                break
            h = 1e-7 * max(abs(a), 1e-9)
            slope = (resid(a + h) - resid(a - h)) / (2 * h)
            if slope <= 0.25 * g:
                a = _bisect(resid, P[i] / g, g)
                break
            a -= r / slope
        p_out[i] = p0[i] + a * e[0]
        q_out[i] = q0[i] + a * e[1]
    return p_out, q_out


def _bisect(resid, a0, g):
    lo, hi = (0.0, 2.0 * a0) if a0 > 0 else (2.0 * a0, 0.0)
    for _ in range(60):
        if resid(lo) * resid(hi) <= 0:
            break
        lo, hi = lo - (hi - lo), hi + (hi - lo)
    else:
        raise ChartError("energy level not bracketed along the gradient line")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if resid(lo) * resid(mid) <= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-16 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def chart_to_state(orb: SeparatrixOrbit, P, tau, I, phi, eta, tube: float | None = None,
                   min_grad: float = 1e-10) -> AugmentedState:
    """State with pendulum energies ``P`` on the normal line through the loop point ``tau``."""
    P = np.atleast_1d(np.asarray(P, dtype=float))
    if tube is not None and np.any(np.abs(P) > tube):
        raise ChartError(f"|P| exceeds the tube half-width {tube:g}")
    p, q = _chart_offsets(orb, P, tau, min_grad)
    return AugmentedState(p, q, I, phi, eta)


def state_to_chart(orb: SeparatrixOrbit, state: AugmentedState, tau_guess=None):
    """Inverse chart: ``(P, tau)`` with ``tau`` the foot of the normal line."""
    spec = orb.spec
    n = orb.n
    P = np.array([float(pendulum_energy(spec, i, state.p[i], state.q[i])) for i in range(n)])
    qc = state.q - np.round(state.q)
    tau = np.empty(n)
    for i in range(n):
        lp = orb.loops[i]
        if tau_guess is None:
            s = np.linspace(-20.0, 20.0, 4001) / lp.lam
            pp, qq, _, _ = lp.eval(s)
            dq = (qq - qc[i] + 0.5) % 1.0 - 0.5
            t = float(s[np.argmin((pp - state.p[i]) ** 2 + dq**2)])
        else:
            t = float(np.atleast_1d(tau_guess)[i])
        for _ in range(50):
            pp, qq, dp, dq_ = lp.eval(t)
            dqq = (qc[i] - qq + 0.5) % 1.0 - 0.5
            g = (state.p[i] - pp) * dp + dqq * dq_
            h = 1e-6
            pp2, qq2, dp2, dq2 = lp.eval(t + h)
            dqq2 = (qc[i] - qq2 + 0.5) % 1.0 - 0.5
            g2 = (state.p[i] - pp2) * dp2 + dqq2 * dq2
            slope = (g2 - g) / h
            if slope == 0:
                break
            dt = -g / slope
            t += dt
            if abs(dt) < 1e-14:
                break
        tau[i] = t
    return P, tau


# --------------------------------------------------------------------------
# shooting
# --------------------------------------------------------------------------
def horizon(orb: SeparatrixOrbit, eps: float, c: float = 3.0) -> float:
    """``T = c log(1/|eps|) / lambda_+`` (``eps = 0`` uses the ``eps = 1e-3`` horizon)."""
    e = abs(eps) if eps != 0 else 1e-3
    return c * np.log(1.0 / e) / orb.lambda_plus


def _linear_coordinate(orb, y, n, direction):
    lam = orb.saddle.lambdas
    s = np.asarray(orb.spec.signs, dtype=float)
    qc = y[n : 2 * n] - np.round(y[n : 2 * n])
    return y[:n] + direction * s * lam * qc


def _graph(cfg, orb, tau, I, phi, eta, eps, direction, c, icfg, max_iter, ptol):
    n = cfg.n
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    I = np.atleast_1d(np.asarray(I, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    icfg = icfg or IntegratorConfig()
    lam = orb.lambda_plus
    lams = orb.saddle.lambdas
    T = horizon(orb, eps, c)
    stages = list(np.arange(2.0 / lam, T, 3.0 / lam)) + [T]
    P = np.zeros(n)

    def start(Pv):
        p, q = _chart_offsets(orb, Pv, tau)
        return np.concatenate([p, q, I, phi])

    def w(Pv, Tk, steps=None, record=False):
        y, taken = _run(cfg, icfg, start(Pv), eta, 0.0, direction * Tk, eps, steps=steps,
                        record=record, check_domain=steps is None)
        return _linear_coordinate(orb, y, n, direction), taken

    total_iter = 0
    dP = np.inf
    for k, Tk in enumerate(stages):
        final = k == len(stages) - 1
        passes = 2 if final else 1
        for _ in range(passes):
            try:
                r, steps = w(P, Tk, record=True)
            except DomainError as err:
                raise ShootingError(f"orbit exits the tube before T = {Tk:.3g}: {err}") from err
            for it in range(max_iter):
                J = np.empty((n, n))
                for j in range(n):
                    # floor: chart points are O(1), so smaller energy steps are lost to rounding
                    h = max(1e-6 * np.exp(-lams[j] * Tk), 1e-14)
                    e = np.zeros(n)
                    e[j] = h
                    J[:, j] = (w(P + e, Tk, steps)[0] - r) / h
                try:
                    dP = np.linalg.solve(J, -r)
                except np.linalg.LinAlgError as err:
                    raise ShootingError(f"singular shooting Jacobian at T = {Tk:.3g}") from err
                t = 1.0
                while True:
                    r_new = w(P + t * dP, Tk, steps)[0]
                    if np.max(np.abs(r_new)) <= np.max(np.abs(r)) or t < 1e-4:
                        break
                    t *= 0.5
                P = P + t * dP
                r = r_new
                total_iter += 1
                if np.max(np.abs(t * dP)) <= ptol:
                    break
            else:
                raise ShootingError(
                    f"shooting Newton did not converge at T = {Tk:.3g} (last step {np.max(np.abs(dP)):.2e})"
                )
    return GraphPoint("stable" if direction > 0 else "unstable", tau, I, phi, eta, P, float(T),
                      float(np.max(np.abs(dP))), total_iter)


def stable_graph_value(cfg, orb, tau, I, phi, eta, eps, c: float = 3.0,
                       icfg: IntegratorConfig | None = None, max_iter: int = 25,
                       ptol: float = 1e-14) -> GraphPoint:
    """``Psi_s(tau, I, phi, eta)``: energies of the stable manifold over the chart point."""
    return _graph(cfg, orb, tau, I, phi, eta, eps, +1, c, icfg, max_iter, ptol)


def unstable_graph_value(cfg, orb, tau, I, phi, eta, eps, c: float = 3.0,
                         icfg: IntegratorConfig | None = None, max_iter: int = 25,
                         ptol: float = 1e-14) -> GraphPoint:
    """``Psi_u``: mirror of :func:`stable_graph_value` in backward time."""
    return _graph(cfg, orb, tau, I, phi, eta, eps, -1, c, icfg, max_iter, ptol)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------
def fit_order(eps, residual) -> OrderFit | None:
    """Slope of ``log|residual|`` versus ``log eps`` (``None`` with fewer than 2 usable points)."""
    eps = np.asarray(eps, dtype=float)
    r = np.abs(np.asarray(residual, dtype=float))
    if r.ndim > 1:
        r = np.max(r, axis=1)
    ok = (r > 0) & np.isfinite(r)
    if np.sum(ok) < 2:
        return None
    if np.sum(ok) == 2:
        x, y = np.log(eps[ok]), np.log(r[ok])
        slope = (y[1] - y[0]) / (x[1] - x[0])
        return OrderFit(float(slope), float("nan"), float(y[0] - slope * x[0]), 2)
    res = stats.linregress(np.log(eps[ok]), np.log(r[ok]))
    return OrderFit(float(res.slope), float(res.stderr), float(res.intercept), int(np.sum(ok)))


def measure_splitting(cfg, orb, tau, I, phi, eta, eps_list, c: float = 3.0,
                      icfg: IntegratorConfig | None = None, tol: float = DEFAULT_TOL) -> SplittingReport:
    """Measured ``Psi_u - Psi_s`` against ``eps * Mv`` over ``eps_list``."""
    eps_list = np.asarray(eps_list, dtype=float)
    Mv = melnikov_vector(cfg, orb, tau, I, phi, eta, tol).value
    meas, pred, st, un = [], [], [], []
    for e in eps_list:
        gs = stable_graph_value(cfg, orb, tau, I, phi, eta, e, c, icfg)
        gu = unstable_graph_value(cfg, orb, tau, I, phi, eta, e, c, icfg)
        st.append(gs)
        un.append(gu)
        meas.append(gu.P - gs.P)
        pred.append(e * Mv)
    meas = np.array(meas)
    pred = np.array(pred)
    resid = meas - pred
    return SplittingReport(eps_list, meas, pred, resid, fit_order(eps_list, resid), tuple(st), tuple(un))


def _homoclinic_tau(cfg, orb, crit, eps, c, icfg, max_iter=30):
    """Root of ``Psi_u - Psi_s`` in ``tau`` near ``crit.tau_star`` (Broyden from ``eps*DMv``)."""
    args = (crit.I, crit.phi, crit.eta0)

    def D(t):
        gu = unstable_graph_value(cfg, orb, t, *args, eps, c, icfg)
        gs = stable_graph_value(cfg, orb, t, *args, eps, c, icfg)
        return gu.P - gs.P, gs, gu

    tau = crit.tau_star.copy()
    B = eps * crit.jacobian
    Dv, gs, gu = D(tau)
    for _ in range(max_iter):
        step = np.linalg.solve(B, -Dv)
        tau_new = tau + step
        Dn, gs_n, gu_n = D(tau_new)
        y = Dn - Dv
        B = B + np.outer(y - B @ step, step) / float(step @ step)
        tau, Dv, gs, gu = tau_new, Dn, gs_n, gu_n
        if np.max(np.abs(step)) <= 1e-11:
            break
    else:
        raise ShootingError("homoclinic root in tau did not converge")
    if np.max(np.abs(tau - crit.tau_star)) > 0.5:
        raise ShootingError("homoclinic root not found near tau*")
    return tau, gs, gu


def action_jump(cfg, orb, crit: CriticalPoint, eps: float, t: float | None = None, c: float = 3.0,
                icfg: IntegratorConfig | None = None, tol: float = DEFAULT_TOL,
                allow_degenerate: bool = False) -> JumpReport:
    """Measure ``I(x+) - I(x-)`` along the perturbed homoclinic orbit near ``crit``.

    Parameters
    ----------
    crit : CriticalPoint
        Non-degenerate zero of the Melnikov vector at ``(I, phi, eta0)``.
    t : float, optional
        Time at which the clock reaches ``crit.eta0`` from its reference state;
        inferred for the affine clock.
    allow_degenerate : bool
        Skip the homoclinic root search (use ``tau*``) and predict with the
        envelope derivative when ``crit`` is degenerate.
    """
    icfg = icfg or IntegratorConfig()
    n, d = cfg.n, cfg.d
    if t is None:
        if cfg.clock.kind == "affine-time":
            t = float(crit.eta0[0] - cfg.clock.eta0[0])
        elif np.allclose(crit.eta0, cfg.clock.eta0):
            t = 0.0
        else:
            raise ValueError("pass t: the clock state does not determine the elapsed time")
    degenerate = not crit.nondegenerate
    if degenerate and not allow_degenerate:
        raise H3Failure(f"critical point is degenerate (rank {crit.rank})")
    T = horizon(orb, eps, c)
    args = (crit.I, crit.phi, crit.eta0)
    if degenerate:
        tau_h = crit.tau_star.copy()
        gs = stable_graph_value(cfg, orb, tau_h, *args, eps, c, icfg)
        gu = unstable_graph_value(cfg, orb, tau_h, *args, eps, c, icfg)
    else:
        tau_h, gs, gu = _homoclinic_tau(cfg, orb, crit, eps, c, icfg)

    def leg(P, direction):
        x = chart_to_state(orb, P, tau_h, crit.I, crit.phi, crit.eta0)
        y, _ = _run(cfg, icfg, x.dynamic_vector(), crit.eta0, 0.0, direction * T, eps)
        inner = np.concatenate([np.zeros(2 * n), y[2 * n :]])
        y0, _ = _run(cfg, icfg, inner, crit.eta0, direction * T, 0.0, eps, freeze=True,
                     check_domain=False)
        return y0[2 * n : 2 * n + d], y0[2 * n + d :]

    I_plus, phi_plus = leg(gs.P, +1)
    I_minus, phi_minus = leg(gu.P, -1)
    measured = I_plus - I_minus
    omega = np.atleast_1d(cfg.rotator.omega(I_minus))
    theta = np.mod(phi_minus - t * omega, 1.0)
    if degenerate:
        eta_ref = np.asarray(cfg.clock.eta0, dtype=float)
        dtheta = np.atleast_1d(
            grad_phi_potential(cfg, orb, tau_h - t, I_minus, theta, eta_ref, tol).value
        )
    else:
        rs = reduced_potential(cfg, orb, I_minus, theta, tau_seed=crit.tau_star - t, tol=tol)
        dtheta = rs.dtheta
    predicted = eps * dtheta
    return JumpReport(
        eps=float(eps),
        measured=measured,
        predicted=predicted,
        residual=measured - predicted,
        dtheta=dtheta,
        tau_h=tau_h,
        I_minus=I_minus,
        phi_minus=np.mod(phi_minus, 1.0),
        I_plus=I_plus,
        phi_plus=np.mod(phi_plus, 1.0),
        horizon=float(T),
        predicted_opposite=-predicted,
    )


def jump_sweep(cfg, orb, crit, eps_list, t=None, c: float = 3.0,
               icfg: IntegratorConfig | None = None) -> JumpSweep:
    reports = tuple(action_jump(cfg, orb, crit, e, t, c, icfg) for e in eps_list)
    fit = fit_order([r.eps for r in reports], np.array([r.residual for r in reports]))
    return JumpSweep(reports, fit)
