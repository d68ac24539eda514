"""Melnikov vector, Melnikov potential, critical points and reduced potential.

Along the unperturbed homoclinic family the integrands are evaluated at

    z(sigma) = (p0(tau + sigma), q0(tau + sigma), I, phi + sigma*omega(I), chi^sigma(eta0))

and at the matching point of the annulus ``p = q = 0``:

* potential   ``M(tau)   = -int [h(z) - h(z_0)] dsigma``
* vector      ``Mv_i(tau) = int [(X1 P_i)(z) - (X1 P_i)(z_0)] dsigma``

With these conventions ``Mv = dM/dtau`` for Hamiltonian perturbations, and
the splitting of the perturbed manifolds in the energy coordinates is
``Psi_u - Psi_s = eps * Mv + O(eps^2)``.

Integrals are truncated to ``[-Sigma - max(tau), Sigma - min(tau)]`` where
``Sigma`` is chosen so that a Lipschitz bound times the separatrix decay
bound closes the tails below ``tol/2``; the remaining ``tol/2`` is spent on
adaptive Gauss-Kronrod quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import HamiltonianField, SystemConfig
from .quadrature import adaptive_gk
from .separatrix import SeparatrixOrbit

__all__ = [
    "MelnikovValue",
    "CriticalPoint",
    "ReducedSample",
    "NotHamiltonianError",
    "ConvergenceError",
    "H3Failure",
    "BranchLossError",
    "melnikov_integrand_vector",
    "melnikov_integrand_potential",
    "melnikov_vector",
    "melnikov_potential",
    "grad_tau_potential",
    "grad_phi_potential",
    "find_critical_tau",
    "reduced_potential",
    "partial_potential",
    "additivity_gap",
]

DEFAULT_TOL = 1e-12


class NotHamiltonianError(TypeError):
    """A potential was requested for a non-Hamiltonian perturbation."""


class ConvergenceError(RuntimeError):
    """An iterative solver did not converge."""


class H3Failure(RuntimeError):
    """The critical point is degenerate (rank-deficient Jacobian)."""


class BranchLossError(RuntimeError):
    """Continuation of the critical branch jumped to a different root."""


@dataclass(frozen=True)
class MelnikovValue:
    """Truncated improper integral with its error budget.

    Attributes
    ----------
    value : float or ndarray
    quad_error : float
        Estimated quadrature error on the truncated window.
    tail_bound : float
        Bound on the discarded ``|sigma| > Sigma`` contribution.
    window : float
        Half-width ``Sigma`` (before the ``tau`` offsets).
    lipschitz : float
        Lipschitz scale used for the tail bound.
    converged : bool
        Whether both error parts met the requested tolerance.
    """

    value: float | np.ndarray
    quad_error: float
    tail_bound: float
    window: float
    lipschitz: float
    converged: bool = True
    evaluations: int = 0

    def to_dict(self) -> dict:
        v = self.value
        return {
            "value": v.tolist() if isinstance(v, np.ndarray) else float(v),
            "quad_error": float(self.quad_error),
            "tail_bound": float(self.tail_bound),
            "window": float(self.window),
            "converged": bool(self.converged),
        }


@dataclass(frozen=True)
class CriticalPoint:
    """Zero ``tau*`` of the Melnikov vector with its non-degeneracy data."""

    tau_star: np.ndarray
    residual_norm: float
    jacobian: np.ndarray
    rank: int
    condition: float
    I: np.ndarray
    phi: np.ndarray
    eta0: np.ndarray
    residual_history: tuple[float, ...] = ()
    iterations: int = 0
    scale: float = 1.0
    tolerance: float = 0.0

    @property
    def nondegenerate(self) -> bool:
        return self.rank == len(self.tau_star)

    def to_dict(self) -> dict:
        return {
            "tau_star": self.tau_star.tolist(),
            "residual_norm": self.residual_norm,
            "jacobian": self.jacobian.tolist(),
            "rank": self.rank,
            "condition": self.condition if np.isfinite(self.condition) else None,
            "nondegenerate": self.nondegenerate,
            "iterations": self.iterations,
            "residual_history": list(self.residual_history),
            "context": {"I": self.I.tolist(), "phi": self.phi.tolist(), "eta0": self.eta0.tolist()},
        }


@dataclass(frozen=True)
class ReducedSample:
    """Reduced potential ``M*(I, theta)`` and its derivatives."""

    I: np.ndarray
    theta: np.ndarray
    value: float
    dtheta: np.ndarray
    dI: np.ndarray
    tau_star: np.ndarray
    dtheta_envelope: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "I": self.I.tolist(),
            "theta": self.theta.tolist(),
            "value": self.value,
            "dtheta": self.dtheta.tolist(),
            "dI": self.dI.tolist(),
            "tau_star": self.tau_star.tolist(),
            "dtheta_envelope": self.dtheta_envelope.tolist(),
        }


# --------------------------------------------------------------------------
# integrand assembly
# --------------------------------------------------------------------------
def _vec(x, size, name):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (size,):
        raise ValueError(f"{name} must have {size} components, got shape {x.shape}")
    return x


def _args(cfg, tau, I, phi, eta0):
    lay = cfg.layout
    return (
        _vec(tau, lay.n, "tau"),
        _vec(I, lay.d, "I"),
        _vec(phi, lay.d, "phi"),
        _vec(eta0, lay.m, "eta0"),
    )


def _points(cfg: SystemConfig, orb: SeparatrixOrbit, tau, sigma, I, phi, eta0, only=None):
    """Variable arrays on the separatrix and on the annulus, shape ``(nz, N)``.

    ``only`` restricts the displacement to a single pendulum (others at rest).
    Also returns the loop derivatives ``(dp, dq)`` of shape ``(n, N)``.
    """
    lay = cfg.layout
    n, d = lay.n, lay.d
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    N = sigma.size
    p, qc, dp, dq = orb.states(tau, sigma)
    if only is not None:
        mask = np.zeros((n, 1))
        mask[only] = 1.0
        p, qc, dp, dq = p * mask, qc * mask, dp * mask, dq * mask
    omega = np.atleast_1d(cfg.rotator.omega(I))
    z0 = np.empty((lay.nz, N))
    z0[: 2 * n] = 0.0
    z0[2 * n : 2 * n + d] = I[:, None]
    z0[2 * n + d : 2 * n + 2 * d] = phi[:, None] + omega[:, None] * sigma[None, :]
    z0[2 * n + 2 * d :] = cfg.clock.advance(eta0, sigma).reshape(lay.m, N)
    z = z0.copy()
    z[:n] = p
    z[n : 2 * n] = qc
    return z, z0, dp, dq


def melnikov_integrand_vector(cfg, orb, i, tau, sigma, I, phi, eta0):
    """Integrand ``(X1 P_i)(z(sigma)) - (X1 P_i)(z_0(sigma))`` of the vector component ``i``."""
    cfg.penduli._check(i)
    tau, I, phi, eta0 = _args(cfg, tau, I, phi, eta0)
    z, z0, _, _ = _points(cfg, orb, tau, sigma, I, phi, eta0)
    out = cfg.energy_derivative(i, z) - cfg.energy_derivative(i, z0)
    return out if np.ndim(sigma) else float(out[0])


def melnikov_integrand_potential(cfg, orb, tau, sigma, I, phi, eta0, only=None):
    """Integrand ``-(h(z(sigma)) - h(z_0(sigma)))`` of the potential."""
    _require_hamiltonian(cfg)
    tau, I, phi, eta0 = _args(cfg, tau, I, phi, eta0)
    z, z0, _, _ = _points(cfg, orb, tau, sigma, I, phi, eta0, only)
    h = cfg.perturbation.h
    out = -(h(z) - h(z0))
    return out if np.ndim(sigma) else float(out[0])


def _require_hamiltonian(cfg):
    if not isinstance(cfg.perturbation, HamiltonianField):
        raise NotHamiltonianError(
            "the perturbation is not Hamiltonian, so no Melnikov potential exists"
        )


# --------------------------------------------------------------------------
# truncation and quadrature
# --------------------------------------------------------------------------
def _panel_width(cfg, orb, I):
    lay = cfg.layout
    rates = [np.max(orb.saddle.lambdas), 1.0]
    rates.append(2.0 * np.max(np.abs(np.atleast_1d(cfg.rotator.omega(I)))))
    if cfg.clock.linear:
        rates.append(2.0 * np.max(np.abs(cfg.clock.nu)))
    return 0.5 / max(rates)


def _profile(orb, tau, sigma, only=None):
    p, qc, _, _ = orb.states(tau, sigma)
    prof = np.maximum(np.abs(p), np.abs(qc))
    if only is not None:
        return prof[only]
    return np.max(prof, axis=0)


def _integrate(f, cfg, orb, tau, I, tol, window=None, lipschitz=None, only=None):
    """Truncate and integrate the vector-valued integrand ``f(sigma) -> (k, N)``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    lam = orb.lambda_plus
    C2 = orb.tail_bound(0.0)
    taus = tau if only is None else tau[only : only + 1]
    if lipschitz is None:
        lipschitz = getattr(cfg.perturbation, "lipschitz", None)
    if lipschitz is None:
        s = np.linspace(-30.0 / lam, 30.0 / lam, 1201)
        ratios = []
        for t in (np.min(taus), np.max(taus)):
            sig = s - t
            prof = _profile(orb, tau, sig, only)
            vals = np.max(np.abs(np.atleast_2d(f(sig))), axis=0)
            ok = prof > 1e-280
            ratios.append(np.max(vals[ok] / prof[ok]) if np.any(ok) else 0.0)
        lipschitz = 2.0 * float(max(ratios))
    if window is None:
        if lipschitz > 0:
            window = np.log(4.0 * lipschitz * C2 / (lam * tol)) / lam
        else:
            window = 0.0
        window = max(window, 2.0 / lam)
    tail = 2.0 * lipschitz * orb.tail_bound(window) / lam
    a = -window - float(np.max(taus))
    b = window - float(np.min(taus))
    res = adaptive_gk(f, a, b, tol - tail if tail < tol else 0.5 * tol,
                      width=_panel_width(cfg, orb, I))
    return MelnikovValue(
        value=res.value,
        quad_error=res.error,
        tail_bound=float(tail),
        window=float(window),
        lipschitz=float(lipschitz),
        converged=bool(res.converged and tail <= tol),
        evaluations=res.evaluations,
    )


def _scalar(mv: MelnikovValue) -> MelnikovValue:
    return MelnikovValue(float(mv.value[0]), mv.quad_error, mv.tail_bound, mv.window,
                         mv.lipschitz, mv.converged, mv.evaluations)


def melnikov_vector(cfg, orb, tau, I, phi, eta0, tol: float = DEFAULT_TOL, window=None,
                    lipschitz=None) -> MelnikovValue:
    """Melnikov vector ``Mv(tau, I, phi, eta0)`` (all ``n`` components).

    Parameters
    ----------
    cfg : SystemConfig
    orb : SeparatrixOrbit
    tau : array_like, shape (n,)
    I, phi : array_like, shape (d,)
    eta0 : array_like, shape (m,)
        Clock state at ``sigma = 0``.
    tol : float
        Absolute tolerance; split evenly between tail and quadrature.
    window : float, optional
        Force the truncation half-width ``Sigma``.
    lipschitz : float, optional
        Override the sampled Lipschitz scale used by the tail bound.
    """
    tau, I, phi, eta0 = _args(cfg, tau, I, phi, eta0)
    n = cfg.n

    def f(sig):
        z, z0, _, _ = _points(cfg, orb, tau, sig, I, phi, eta0)
        return np.stack([cfg.energy_derivative(i, z) - cfg.energy_derivative(i, z0) for i in range(n)])

    return _integrate(f, cfg, orb, tau, I, tol, window, lipschitz)


def melnikov_potential(cfg, orb, tau, I, phi, eta0, tol: float = DEFAULT_TOL, window=None,
                       lipschitz=None) -> MelnikovValue:
    """Melnikov potential ``M(tau, I, phi, eta0)`` (Hamiltonian perturbations only)."""
    _require_hamiltonian(cfg)
    tau, I, phi, eta0 = _args(cfg, tau, I, phi, eta0)
    h = cfg.perturbation.h

    def f(sig):
        z, z0, _, _ = _points(cfg, orb, tau, sig, I, phi, eta0)
        return (-(h(z) - h(z0)))[None, :]

    return _scalar(_integrate(f, cfg, orb, tau, I, tol, window, lipschitz))


def grad_tau_potential(cfg, orb, tau, I, phi, eta0, tol: float = DEFAULT_TOL, window=None,
                       lipschitz=None) -> MelnikovValue:
    """``dM/dtau`` by quadrature of the differentiated integrand.

    Uses ``d/dtau_i h(z) = dh/dp_i * p0_i' + dh/dq_i * q0_i'`` with the loop
    velocities taken from the separatrix parameterization itself.
    """
    _require_hamiltonian(cfg)
    tau, I, phi, eta0 = _args(cfg, tau, I, phi, eta0)
    lay = cfg.layout
    n = lay.n
    h = cfg.perturbation.h

    def f(sig):
        z, _, dp, dq = _points(cfg, orb, tau, sig, I, phi, eta0)
        g = h.grad(z)
        return -(g[:n] * dp + g[n : 2 * n] * dq)

    return _integrate(f, cfg, orb, tau, I, tol, window, lipschitz)


def grad_phi_potential(cfg, orb, tau, I, phi, eta0, tol: float = DEFAULT_TOL) -> MelnikovValue:
    """``dM/dphi`` by quadrature of the differentiated integrand."""
    _require_hamiltonian(cfg)
    tau, I, phi, eta0 = _args(cfg, tau, I, phi, eta0)
    lay = cfg.layout
    n, d = lay.n, lay.d
    h = cfg.perturbation.h
    sl = slice(2 * n + d, 2 * n + 2 * d)

    def f(sig):
        z, z0, _, _ = _points(cfg, orb, tau, sig, I, phi, eta0)
        return -(h.grad(z)[sl] - h.grad(z0)[sl])

    return _integrate(f, cfg, orb, tau, I, tol)


def partial_potential(cfg, orb, i, varsigma, I, phi, eta0, tol: float = DEFAULT_TOL) -> MelnikovValue:
    """Single-pendulum potential: pendulum ``i`` on its loop at phase ``varsigma``, others at rest."""
    _require_hamiltonian(cfg)
    cfg.penduli._check(i)
    tau = np.zeros(cfg.n)
    tau[i] = float(varsigma)
    tau, I, phi, eta0 = _args(cfg, tau, I, phi, eta0)
    h = cfg.perturbation.h

    def f(sig):
        z, z0, _, _ = _points(cfg, orb, tau, sig, I, phi, eta0, only=i)
        return (-(h(z) - h(z0)))[None, :]

    return _scalar(_integrate(f, cfg, orb, tau, I, tol, only=i))


def additivity_gap(cfg, orb, tau, I, phi, eta0, tol: float = DEFAULT_TOL) -> float:
    """``|M(tau) - sum_i M_i(tau_i)|``."""
    tau, I, phi, eta0 = _args(cfg, tau, I, phi, eta0)
    total = melnikov_potential(cfg, orb, tau, I, phi, eta0, tol).value
    parts = sum(partial_potential(cfg, orb, i, tau[i], I, phi, eta0, tol).value for i in range(cfg.n))
    return float(abs(total - parts))


# --------------------------------------------------------------------------
# critical points (H3) and the reduced potential (H4)
# --------------------------------------------------------------------------
def _fd_jacobian(F, tau, step):
    n = len(tau)
    J = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        J[:, k] = (F(tau + e) - F(tau - e)) / (2 * step)
    return J


def find_critical_tau(cfg, orb, tau_guess, I, phi, eta0, tol: float = DEFAULT_TOL,
                      newton_tol: float = 1e-10, grid: int = 8, period: float = 1.0,
                      max_iter: int = 50, fd_step: float = 1e-5) -> CriticalPoint:
    """Damped Newton for ``Mv(tau) = 0`` in ``tau``.

    Parameters
    ----------
    tau_guess : array_like or None
        Starting point; ``None`` seeds from the best of ``grid**n`` cell
        centres covering ``[-period/2, period/2)^n``.
    newton_tol : float
        Relative residual target; the absolute target is ``newton_tol * scale``
        with ``scale = max(1, max |Mv|)`` over the seeds.
    """
    lay = cfg.layout
    n = lay.n
    I = _vec(I, lay.d, "I")
    phi = _vec(phi, lay.d, "phi")
    eta0 = _vec(eta0, lay.m, "eta0")

    def F(t):
        return melnikov_vector(cfg, orb, t, I, phi, eta0, tol).value

    if tau_guess is None:
        cells = (np.arange(grid) + 0.5) / grid * period - 0.5 * period
        mesh = np.stack(np.meshgrid(*([cells] * n), indexing="ij"), axis=-1).reshape(-1, n)
        vals = np.array([F(t) for t in mesh])
        norms = np.max(np.abs(vals), axis=1)
        tau = mesh[np.argmin(norms)].copy()
        Fv = vals[np.argmin(norms)]
        scale = max(1.0, float(np.max(norms)))
    else:
        tau = _vec(tau_guess, n, "tau_guess").copy()
        Fv = F(tau)
        scale = max(1.0, float(np.max(np.abs(Fv))))
    target = newton_tol * scale
    res = float(np.max(np.abs(Fv)))
    history = [res]
    it = 0
    while res > target:
        if it >= max_iter:
            raise ConvergenceError(
                f"Newton did not converge in {max_iter} iterations (residual {res:.3e})"
            )
        J = _fd_jacobian(F, tau, fd_step)
        step = np.linalg.lstsq(J, -Fv, rcond=None)[0]
        if not np.all(np.isfinite(step)) or not np.any(step):
            raise ConvergenceError("singular Jacobian away from a root")
        t = 1.0
        while True:
            trial = tau + t * step
            Ft = F(trial)
            rt = float(np.max(np.abs(Ft)))
            if rt <= (1.0 - 1e-4 * t) * res or t < 1e-6:
                break
            t *= 0.5
        tau, Fv, res = trial, Ft, rt
        history.append(res)
        it += 1
    J = _fd_jacobian(F, tau, fd_step)
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[0] > 0:
        rank = int(np.sum(sv > 1e-8 * sv[0]))
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    else:
        rank, cond = 0, float("inf")
    return CriticalPoint(
        tau_star=tau,
        residual_norm=res,
        jacobian=J,
        rank=rank,
        condition=cond,
        I=I,
        phi=phi,
        eta0=eta0,
        residual_history=tuple(history),
        iterations=it,
        scale=scale,
        tolerance=target,
    )


def reduced_potential(cfg, orb, I, theta, tau_seed=None, step: float = 1e-4,
                      tol: float = DEFAULT_TOL, grid: int = 8) -> ReducedSample:
    """Reduced potential ``M*(I, theta)`` on the branch through ``tau_seed``.

    The clock sits at its reference state (``t = 0``). ``dtheta`` and ``dI``
    are central differences with ``tau*`` re-solved at every probe; the
    envelope value ``dM/dphi`` at ``tau*`` is computed alongside as a check.
    """
    _require_hamiltonian(cfg)
    lay = cfg.layout
    d = lay.d
    I = _vec(I, d, "I")
    theta = np.mod(_vec(theta, d, "theta"), 1.0)
    eta_ref = np.asarray(cfg.clock.eta0, dtype=float)
    crit = find_critical_tau(cfg, orb, tau_seed, I, theta, eta_ref, tol, grid=grid)
    if not crit.nondegenerate:
        raise H3Failure(f"critical point is degenerate (rank {crit.rank} < {lay.n})")
    ts = crit.tau_star
    value = melnikov_potential(cfg, orb, ts, I, theta, eta_ref, tol).value

    def probe(Ip, thp):
        c = find_critical_tau(cfg, orb, ts, Ip, thp, eta_ref, tol)
        jump = float(np.max(np.abs(c.tau_star - ts)))
        if jump > 0.1:
            raise BranchLossError(f"tau* moved by {jump:.3g} between adjacent probes")
        return melnikov_potential(cfg, orb, c.tau_star, Ip, thp, eta_ref, tol).value

    dtheta = np.empty(d)
    dI = np.empty(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        dtheta[j] = (probe(I, theta + e) - probe(I, theta - e)) / (2 * step)
        dI[j] = (probe(I + e, theta) - probe(I - e, theta)) / (2 * step)
    env = grad_phi_potential(cfg, orb, ts, I, theta, eta_ref, tol).value
    if np.max(np.abs(env - dtheta)) > 1e-4 * max(1.0, float(np.max(np.abs(env)))):
        raise BranchLossError(
            f"finite-difference dM*/dtheta {dtheta} disagrees with the envelope value {env}"
        )
    return ReducedSample(I, theta, float(value), dtheta, dI, ts, np.asarray(env))
