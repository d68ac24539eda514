"""Penduli-rotator model: specifications, vector fields and pendulum energies.

The unperturbed Hamiltonian is

    H0(p, q, I, phi) = h0(I) + sum_i s_i * (p_i**2 / 2 + V_i(q_i)),   s_i = +-1,

on ``R^n x T^n x R^d x T^d`` with ``T = R/Z``. Equations of motion use
``dp/dt = -dH/dq``, ``dq/dt = dH/dp``, ``dI/dt = -dH/dphi``,
``dphi/dt = dH/dI``. Time dependence of the perturbation enters through a
clock state ``eta`` advanced by a :class:`ClockDriver`.

The variable vector shared by every expression is laid out as
``z = (p_1..p_n, q_1..q_n, I_1..I_d, phi_1..phi_d, eta_1..eta_m)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .expr import Expr, cosine_amplitude

__all__ = [
    "Layout",
    "PenduliSpec",
    "RotatorSpec",
    "ClockDriver",
    "HamiltonianField",
    "GeneralField",
    "Domain",
    "SystemConfig",
    "AugmentedState",
    "Tangent",
    "DomainError",
    "pendulum_energy",
    "unperturbed_field",
    "perturbed_field",
    "perturbation_on_energy",
]


class DomainError(RuntimeError):
    """A state left the configured domain (energy tube or action ball)."""


def _wrap(x):
    return np.mod(np.asarray(x, dtype=float), 1.0)


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping for the shared variable vector ``z``."""

    n: int
    d: int
    m: int
    clock_names: tuple[str, ...] = ()

    @property
    def nz(self) -> int:
        return 2 * self.n + 2 * self.d + self.m

    @property
    def ny(self) -> int:
        """Dimension of the dynamic state (p, q, I, phi)."""
        return 2 * self.n + 2 * self.d

    def p(self, i):
        return i

    def q(self, i):
        return self.n + i

    def I(self, j):  # noqa: E743
        return 2 * self.n + j

    def phi(self, j):
        return 2 * self.n + self.d + j

    def eta(self, k):
        return 2 * self.n + 2 * self.d + k

    @cached_property
    def names(self) -> tuple[str, ...]:
        n, d = self.n, self.d
        clock = self.clock_names or tuple(f"eta{k + 1}" for k in range(self.m))
        return (
            tuple(f"p{i + 1}" for i in range(n))
            + tuple(f"q{i + 1}" for i in range(n))
            + tuple(f"I{j + 1}" for j in range(d))
            + tuple(f"phi{j + 1}" for j in range(d))
            + tuple(clock)
        )

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown variable {name!r}; expected one of {list(self.names)}") from None


# --------------------------------------------------------------------------
# specifications
# --------------------------------------------------------------------------
_PROBE_Q = np.linspace(0.0, 1.0, 37)


@dataclass(frozen=True)
class PenduliSpec:
    """The ``n`` pendula: potentials ``V_i`` (one variable each) and signs.

    Parameters
    ----------
    potentials : sequence of Expr
        One-variable expressions, period 1, with ``V(0) = V'(0) = 0`` and
        ``V''(0) < 0``.
    signs : sequence of {+1, -1}
    branches : sequence of {+1, -1}, optional
        Which homoclinic loop to follow (sign of ``p`` on the loop).
    """

    potentials: tuple[Expr, ...]
    signs: tuple[int, ...]
    branches: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "potentials", tuple(self.potentials))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        br = self.branches if self.branches is not None else (1,) * len(self.potentials)
        object.__setattr__(self, "branches", tuple(int(b) for b in br))
        if len(self.potentials) == 0:
            raise ValueError("at least one pendulum is required")
        if not (len(self.potentials) == len(self.signs) == len(self.branches)):
            raise ValueError("potentials, signs and branches must have equal length")
        for i, (V, s, b) in enumerate(zip(self.potentials, self.signs, self.branches)):
            if s not in (1, -1) or b not in (1, -1):
                raise ValueError(f"pendulum {i}: sign and branch must be +1 or -1")
            if V.nvars != 1:
                raise ValueError(f"pendulum {i}: potential must be a one-variable expression")
            v0 = float(V(np.zeros(1)))
            d1 = float(self.dV(i, 0.0))
            d2 = float(self.d2V(i, 0.0))
            scale = max(1.0, np.max(np.abs(V(_PROBE_Q[None, :]))))
            if abs(v0) > 1e-12 * scale:
                raise ValueError(f"pendulum {i}: V(0) = {v0:g}; shift the potential so V(0) = 0")
            if abs(d1) > 1e-12 * scale:
                raise ValueError(f"pendulum {i}: V'(0) = {d1:g} != 0 (saddle must sit at q = 0)")
            if not d2 < 0:
                raise ValueError(f"pendulum {i}: V''(0) = {d2:g} must be negative")
            shifted = V((_PROBE_Q + 1.0)[None, :]) - V(_PROBE_Q[None, :])
            if np.max(np.abs(shifted)) > 1e-12 * scale:
                raise ValueError(f"pendulum {i}: potential is not 1-periodic")

    @property
    def n(self) -> int:
        return len(self.potentials)

    def _check(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"pendulum index {i} out of range for n = {self.n}")

    def V(self, i: int, q):
        self._check(i)
        q = np.asarray(q, dtype=float)
        return self.potentials[i](q[None, ...])

    def dV(self, i: int, q):
        self._check(i)
        q = np.asarray(q, dtype=float)
        return self.potentials[i].grad(q[None, ...])[0]

    def d2V(self, i: int, q):
        self._check(i)
        q = np.asarray(q, dtype=float)
        return self.potentials[i].hessian(q[None, ...])[0, 0]

    def cosine_amplitude(self, i: int) -> float | None:
        return cosine_amplitude(self.potentials[i])

    def energy_scale(self, i: int) -> float:
        """``max_q |V_i(q)|`` estimated on a fine grid."""
        qs = np.linspace(0.0, 1.0, 2001)
        return float(np.max(np.abs(self.V(i, qs))))


@dataclass(frozen=True)
class RotatorSpec:
    """Integrable rotator ``h0(I)`` on ``R^d x T^d``."""

    h0: Expr

    @property
    def d(self) -> int:
        return self.h0.nvars

    def energy(self, I):
        return self.h0(np.asarray(I, dtype=float))

    def omega(self, I):
        """Frequency map ``dh0/dI``."""
        return self.h0.grad(np.asarray(I, dtype=float))

    def hessian(self, I):
        return self.h0.hessian(np.asarray(I, dtype=float))


CLOCK_KINDS = ("affine-time", "periodic", "quasiperiodic", "custom")


@dataclass(frozen=True)
class ClockDriver:
    """Auxiliary flow ``chi^sigma`` carrying the time dependence.

    Built-in kinds are linear flows ``eta0 + nu*sigma``; ``affine-time`` has
    ``m = 1``, ``nu = 1`` and real-valued state (``eta = t``), ``periodic``
    and ``quasiperiodic`` states live on the torus. ``custom`` takes Python
    callables ``advance_fn(eta, sigma)`` and ``generator_fn(eta)``.
    """

    kind: str = "affine-time"
    frequencies: tuple[float, ...] = (1.0,)
    eta0: tuple[float, ...] = (0.0,)
    advance_fn: Callable | None = field(default=None, compare=False)
    generator_fn: Callable | None = field(default=None, compare=False)
    angular: bool = True

    def __post_init__(self):
        if self.kind not in CLOCK_KINDS:
            raise ValueError(f"clock kind must be one of {CLOCK_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "frequencies", tuple(float(v) for v in np.atleast_1d(self.frequencies)))
        object.__setattr__(self, "eta0", tuple(float(v) for v in np.atleast_1d(self.eta0)))
        if self.kind == "affine-time":
            if self.frequencies != (1.0,) or len(self.eta0) != 1:
                raise ValueError("affine-time clock has m = 1 and unit rate")
            object.__setattr__(self, "angular", False)
        elif self.kind == "periodic" and len(self.frequencies) != 1:
            raise ValueError("periodic clock has a single frequency")
        elif self.kind == "custom" and self.advance_fn is None:
            raise ValueError("custom clock requires advance_fn")
        if self.kind != "custom" and len(self.frequencies) != len(self.eta0):
            raise ValueError("clock frequencies and eta0 must have equal length")

    @property
    def m(self) -> int:
        return len(self.eta0)

    @property
    def linear(self) -> bool:
        return self.kind != "custom"

    @property
    def nu(self) -> np.ndarray:
        return np.asarray(self.frequencies)

    def advance(self, eta, sigma):
        """``chi^sigma(eta)``; ``sigma`` may be an array (broadcast on the last axis)."""
        eta = np.asarray(eta, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.advance_fn(eta, sigma), dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        out = eta.reshape((-1,) + (1,) * sigma.ndim) + np.multiply.outer(self.nu, sigma)
        return _wrap(out) if self.angular else out

    def state_at(self, t: float) -> np.ndarray:
        """Clock state reached from the reference ``eta0`` after time ``t``."""
        return self.advance(np.asarray(self.eta0), float(t))

    def generator(self, eta) -> np.ndarray:
        if self.kind == "custom":
            if self.generator_fn is not None:
                return np.asarray(self.generator_fn(eta), dtype=float)
            h = 1e-6
            return (self.advance(eta, h) - self.advance(eta, -h)) / (2 * h)
        return self.nu.copy()

    def names(self) -> tuple[str, ...]:
        if self.kind == "affine-time":
            return ("t",)
        return tuple(f"eta{k + 1}" for k in range(self.m))


@dataclass(frozen=True)
class HamiltonianField:
    """Perturbation ``J grad h`` from a scalar ``h(p, q, I, phi, eta)``."""

    h: Expr
    bound: float | None = None
    lipschitz: float | None = None

    @property
    def exprs(self) -> tuple[Expr, ...]:
        return (self.h,)

    def is_zero(self) -> bool:
        return self.h.is_zero


@dataclass(frozen=True)
class GeneralField:
    """Perturbation given component-wise, ordered ``(p.., q.., I.., phi..)``."""

    components: tuple[Expr, ...]
    bound: float | None = None
    lipschitz: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def exprs(self) -> tuple[Expr, ...]:
        return self.components

    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.components)


@dataclass(frozen=True)
class Domain:
    """Working domain: ``|P_i| <= tube`` and ``|I - center| <= radius``."""

    tube: float | None = None
    action_center: tuple[float, ...] | None = None
    action_radius: float = np.inf


@dataclass(frozen=True)
class SystemConfig:
    """Complete penduli-rotator system with perturbation and clock."""

    penduli: PenduliSpec
    rotator: RotatorSpec
    perturbation: HamiltonianField | GeneralField
    clock: ClockDriver = field(default_factory=ClockDriver)
    domain: Domain = field(default_factory=Domain)
    eps: float = 0.0

    def __post_init__(self):
        lay = self.layout
        pert = self.perturbation
        if isinstance(pert, GeneralField) and len(pert.components) != lay.ny:
            raise ValueError(f"general field needs {lay.ny} components, got {len(pert.components)}")
        for e in pert.exprs:
            if e.nvars != lay.nz:
                raise ValueError(f"perturbation expressions must use {lay.nz} variables {lay.names}")
            angles = [lay.q(i) for i in range(lay.n)] + [lay.phi(j) for j in range(lay.d)]
            if self.clock.angular and self.clock.linear:
                angles += [lay.eta(k) for k in range(lay.m)]
            for v in angles:
                if not e.periodic_in(v):
                    raise ValueError(f"perturbation must be 1-periodic in angle variable {lay.names[v]}")
        if not all(e.periodic_in(0) for e in self.penduli.potentials):
            raise ValueError("potentials must be built from 1-periodic factors")
        if self.domain.action_center is not None and len(self.domain.action_center) != lay.d:
            raise ValueError("action_center must have d components")

    @cached_property
    def layout(self) -> Layout:
        return Layout(self.penduli.n, self.rotator.d, self.clock.m, self.clock.names())

    @property
    def n(self) -> int:
        return self.penduli.n

    @property
    def d(self) -> int:
        return self.rotator.d

    @property
    def hamiltonian(self) -> bool:
        return isinstance(self.perturbation, HamiltonianField)

    @cached_property
    def tube(self) -> float:
        if self.domain.tube is not None:
            return float(self.domain.tube)
        return 0.5 * min(self.penduli.energy_scale(i) for i in range(self.n))

    @cached_property
    def action_center(self) -> np.ndarray:
        c = self.domain.action_center
        return np.zeros(self.d) if c is None else np.asarray(c, dtype=float)

    def with_eps(self, eps: float) -> "SystemConfig":
        return SystemConfig(self.penduli, self.rotator, self.perturbation, self.clock, self.domain, eps)

    def with_perturbation(self, pert) -> "SystemConfig":
        return SystemConfig(self.penduli, self.rotator, pert, self.clock, self.domain, self.eps)

    def with_clock(self, clock: ClockDriver, perturbation=None) -> "SystemConfig":
        pert = self.perturbation if perturbation is None else perturbation
        return SystemConfig(self.penduli, self.rotator, pert, clock, self.domain, self.eps)

    # vectorized helpers on z of shape (nz, N) ------------------------------
    def potential_parts(self, q):
        """``(V_i, V_i')`` for stacked pendulum coordinates ``q`` of shape (n, ...)."""
        q = np.asarray(q, dtype=float)
        vals = np.empty_like(q)
        ders = np.empty_like(q)
        for i, V in enumerate(self.penduli.potentials):
            v, g = V.value_and_grad(q[i][None, ...])
            vals[i], ders[i] = v, g[0]
        return vals, ders

    def perturbation_components(self, z):
        """Components of the perturbing field at ``z``, shape ``(ny, ...)``."""
        lay = self.layout
        z = np.asarray(z, dtype=float)
        pert = self.perturbation
        if isinstance(pert, GeneralField):
            return np.stack([c(z) for c in pert.components])
        g = pert.h.grad(z)
        n, d = lay.n, lay.d
        out = np.empty((lay.ny,) + z.shape[1:])
        out[:n] = -g[n : 2 * n]
        out[n : 2 * n] = g[:n]
        out[2 * n : 2 * n + d] = -g[2 * n + d : 2 * n + 2 * d]
        out[2 * n + d : 2 * n + 2 * d] = g[2 * n : 2 * n + d]
        return out

    def energy_derivative(self, i: int, z):
        """``X^1 P_i`` at ``z`` (shape ``(nz, ...)``)."""
        lay = self.layout
        z = np.asarray(z, dtype=float)
        s = self.penduli.signs[i]
        comp = self.perturbation_components(z)
        dV = self.penduli.dV(i, z[lay.q(i)])
        return comp[lay.p(i)] * s * z[lay.p(i)] + comp[lay.q(i)] * s * dV

    def state_vector(self, x: "AugmentedState") -> np.ndarray:
        return np.concatenate([x.p, x.q, x.I, x.phi, np.atleast_1d(x.eta)])


@dataclass(frozen=True)
class AugmentedState:
    """Point ``(p, q, I, phi, eta)`` of the augmented phase space."""

    p: np.ndarray
    q: np.ndarray
    I: np.ndarray
    phi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)).copy())
        object.__setattr__(self, "q", _wrap(np.atleast_1d(self.q)))
        object.__setattr__(self, "I", np.atleast_1d(np.asarray(self.I, dtype=float)).copy())
        object.__setattr__(self, "phi", _wrap(np.atleast_1d(self.phi)))
        object.__setattr__(self, "eta", np.atleast_1d(np.asarray(self.eta, dtype=float)).copy())
        if self.p.shape != self.q.shape or self.I.shape != self.phi.shape:
            raise ValueError("p/q and I/phi must have matching shapes")

    @classmethod
    def from_vector(cls, y, n: int, d: int, eta) -> "AugmentedState":
        y = np.asarray(y, dtype=float)
        return cls(y[:n], y[n : 2 * n], y[2 * n : 2 * n + d], y[2 * n + d : 2 * n + 2 * d], eta)

    def dynamic_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.I, self.phi])


class Tangent(NamedTuple):
    """Tangent vector ``(dp, dq, dI, dphi, deta)``."""

    p: np.ndarray
    q: np.ndarray
    I: np.ndarray
    phi: np.ndarray
    eta: np.ndarray

    def dynamic_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.I, self.phi])


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------
def pendulum_energy(spec: PenduliSpec, i: int, p_i, q_i):
    """``P_i = s_i * (p_i**2/2 + V_i(q_i))``."""
    spec._check(i)
    return spec.signs[i] * (0.5 * np.asarray(p_i, dtype=float) ** 2 + spec.V(i, q_i))


def _check_domain(cfg: SystemConfig, x: AugmentedState):
    spec = cfg.penduli
    for i in range(cfg.n):
        P = float(pendulum_energy(spec, i, x.p[i], x.q[i]))
        if abs(P) > cfg.tube:
            raise DomainError(f"|P_{i + 1}| = {abs(P):.3g} exceeds tube half-width {cfg.tube:.3g}")
    r = float(np.linalg.norm(x.I - cfg.action_center))
    if r > cfg.domain.action_radius:
        raise DomainError(f"action |I - center| = {r:.3g} exceeds radius {cfg.domain.action_radius:.3g}")


def unperturbed_field(cfg: SystemConfig, x: AugmentedState) -> Tangent:
    """Integrable vector field ``J grad H0`` plus the clock generator."""
    spec = cfg.penduli
    s = np.asarray(spec.signs, dtype=float)
    _, dV = cfg.potential_parts(x.q)
    return Tangent(
        p=-s * dV,
        q=s * x.p,
        I=np.zeros(cfg.d),
        phi=np.atleast_1d(cfg.rotator.omega(x.I)),
        eta=np.atleast_1d(cfg.clock.generator(x.eta)),
    )


def perturbed_field(cfg: SystemConfig, x: AugmentedState, eps: float) -> Tangent:
    """``X0 + eps * X1`` at ``x``; raises :class:`DomainError` outside the domain."""
    _check_domain(cfg, x)
    base = unperturbed_field(cfg, x)
    if eps == 0.0:
        return base
    z = cfg.state_vector(x)
    comp = cfg.perturbation_components(z)
    n, d = cfg.n, cfg.d
    return Tangent(
        p=base.p + eps * comp[:n],
        q=base.q + eps * comp[n : 2 * n],
        I=base.I + eps * comp[2 * n : 2 * n + d],
        phi=base.phi + eps * comp[2 * n + d :],
        eta=base.eta,
    )


def perturbation_on_energy(cfg: SystemConfig, i: int, x: AugmentedState) -> float:
    """Directional derivative ``X^1 P_i`` at ``x``.

    For a Hamiltonian field this is the bracket
    ``dP_i/dq_i * dh/dp_i - dP_i/dp_i * dh/dq_i``.
    """
    cfg.penduli._check(i)
    return float(cfg.energy_derivative(i, cfg.state_vector(x)))
