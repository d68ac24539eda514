"""Ready-made systems used by the examples, the CLI and the test-suite."""
from __future__ import annotations

import numpy as np

from .expr import Expr, Factor, Term, cosine_potential
from .model import (
    ClockDriver,
    Domain,
    GeneralField,
    HamiltonianField,
    PenduliSpec,
    RotatorSpec,
    SystemConfig,
)

#: Cosine amplitude giving a unit saddle rate, ``lambda = 2*pi*sqrt(A) = 1``.
UNIT_AMPLITUDE = 1.0 / (4.0 * np.pi**2)


def quadratic_rotator(d: int = 1) -> RotatorSpec:
    """``h0(I) = |I|^2 / 2``."""
    return RotatorSpec(Expr(d, tuple(Term(0.5, (Factor(j, "pow", 2),)) for j in range(d))))


def cosine_penduli(n: int = 1, amplitude: float = UNIT_AMPLITUDE, signs=None) -> PenduliSpec:
    signs = (1,) * n if signs is None else tuple(signs)
    return PenduliSpec(tuple(cosine_potential(amplitude) for _ in range(n)), signs)


def _cos(var, a=1.0, b=0.0):
    return Factor(var, "cos", a, b)


def reference(eps: float = 0.0, tube: float = 0.04) -> SystemConfig:
    """One cosine pendulum, one rotator, ``h = cos(2 pi q) (cos(2 pi phi) + cos(2 pi t))``.

    Variables are ``z = (p, q, I, phi, t)``.
    """
    h = Expr(5, (Term(1.0, (_cos(1), _cos(3))), Term(1.0, (_cos(1), _cos(4)))))
    return SystemConfig(
        cosine_penduli(1),
        quadratic_rotator(1),
        HamiltonianField(h),
        ClockDriver("affine-time"),
        Domain(tube=tube),
        eps,
    )


def reference_closed_form(tau, I, phi, t):
    """Potential of :func:`reference` in closed form.

    Uses ``cos(2 pi q0(s)) - 1 = -2 sech(s)^2`` and
    ``int sech(s)^2 cos(a s) ds = pi a / sinh(pi a / 2)``.
    """
    tau, I, phi, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (tau, I, phi, t)))
    x = np.pi**2 * I
    with np.errstate(invalid="ignore", divide="ignore"):
        k1 = np.where(np.abs(x) < 1e-12, 2.0, 2.0 * x / np.sinh(np.where(x == 0, 1.0, x)))
    k2 = 2.0 * np.pi**2 / np.sinh(np.pi**2)
    return 2.0 * (np.cos(2 * np.pi * (phi - tau * I)) * k1 + np.cos(2 * np.pi * (t - tau)) * k2)


def reference_closed_form_dtau(tau, I, phi, t):
    """``d/dtau`` of :func:`reference_closed_form`."""
    tau, I, phi, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (tau, I, phi, t)))
    x = np.pi**2 * I
    with np.errstate(invalid="ignore", divide="ignore"):
        k1 = np.where(np.abs(x) < 1e-12, 2.0, 2.0 * x / np.sinh(np.where(x == 0, 1.0, x)))
    k2 = 2.0 * np.pi**2 / np.sinh(np.pi**2)
    return 2.0 * (
        2 * np.pi * I * np.sin(2 * np.pi * (phi - tau * I)) * k1
        + 2 * np.pi * np.sin(2 * np.pi * (t - tau)) * k2
    )


def with_h(cfg: SystemConfig, terms) -> SystemConfig:
    """Replace the Hamiltonian perturbation of ``cfg`` by ``sum(terms)``."""
    return cfg.with_perturbation(HamiltonianField(Expr(cfg.layout.nz, tuple(terms))))


def zero_perturbation(eps: float = 0.0) -> SystemConfig:
    """Reference geometry with ``h = 0``."""
    return with_h(reference(eps), ())


def pq_independent(eps: float = 0.0) -> SystemConfig:
    """Reference geometry with ``h = cos(2 pi phi) cos(2 pi t)``, free of ``(p, q)``."""
    return with_h(reference(eps), (Term(1.0, (_cos(3), _cos(4))),))


def dissipative(eps: float = 0.0, damping: float = 0.5) -> SystemConfig:
    """Non-Hamiltonian variant: damped, periodically forced pendulum.

    ``X1 = (-damping * p + 2 pi sin(2 pi q) cos(2 pi t), 0, 0, 0)``.
    """
    base = reference(eps)
    nz = base.layout.nz
    comps = (
        Expr(nz, (Term(-damping, (Factor(0, "pow", 1),)),
                  Term(2 * np.pi, (Factor(1, "sin", 1.0), _cos(4))))),
        Expr.zero(nz),
        Expr.zero(nz),
        Expr.zero(nz),
    )
    return base.with_perturbation(GeneralField(comps))


def two_pendulum(coupling: float = 0.0, eps: float = 0.0) -> SystemConfig:
    """Two identical unit-rate cosine pendula and one rotator.

    ``h = (cos 2 pi q1 + cos 2 pi q2) cos 2 pi t + coupling cos 2 pi q1 cos 2 pi q2``.
    Variables are ``z = (p1, p2, q1, q2, I, phi, t)``; ``coupling = 0`` is additive.
    """
    terms = [Term(1.0, (_cos(2), _cos(6))), Term(1.0, (_cos(3), _cos(6)))]
    if coupling:
        terms.append(Term(coupling, (_cos(2), _cos(3))))
    return SystemConfig(
        cosine_penduli(2),
        quadratic_rotator(1),
        HamiltonianField(Expr(7, tuple(terms))),
        ClockDriver("affine-time"),
        Domain(tube=0.04),
        eps,
    )


def quasiperiodic_pair(t0: float = 0.0, freq: float = np.sqrt(2.0)):
    """Same perturbation written with an affine clock and with a 2-torus clock.

    ``h = cos(2 pi q) (cos 2 pi t + cos 2 pi freq t)``. Returns ``(affine, torus)``
    configurations whose clocks start at ``t0``.
    """
    base = reference()
    affine = with_h(
        base.with_clock(ClockDriver("affine-time", (1.0,), (t0,))),
        (Term(1.0, (_cos(1), _cos(4))), Term(1.0, (_cos(1), _cos(4, freq)))),
    )
    clock = ClockDriver("quasiperiodic", (1.0, freq), (t0 % 1.0, (freq * t0) % 1.0))
    h = Expr(6, (Term(1.0, (_cos(1), _cos(4))), Term(1.0, (_cos(1), _cos(5)))))
    torus = base.with_clock(clock, HamiltonianField(h))
    return affine, torus
