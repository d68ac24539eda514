"""Integration kernels with a compiled core and a pure-Python fallback.

The compiled extension ``_core`` is used when importable; setting the
environment variable ``MELNIKOVKIT_PURE_PYTHON=1`` forces the fallback.
Both expose the same class interface (see ``_pycore.PySystem``).
"""
from __future__ import annotations

import os

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from ..expr import compile_tables
from ._pycore import DOMAIN, MAXSTEPS, NONFINITE, OK, UNDERFLOW, PySystem

try:
    if os.environ.get("MELNIKOVKIT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure Python requested")
    from ._core import CSystem
except ImportError:  # pragma: no cover - depends on the build
    CSystem = None

BACKEND = "cython" if CSystem is not None else "python"

STATUS_TEXT = {
    OK: "ok",
    UNDERFLOW: "step-size underflow",
    DOMAIN: "state left the domain",
    MAXSTEPS: "step budget exhausted",
    NONFINITE: "non-finite state",
}

_NS = _dop.N_STAGES
TABLEAU = dict(
    A=np.ascontiguousarray(_dop.A[:_NS, :_NS]),
    B=np.ascontiguousarray(_dop.B),
    C=np.ascontiguousarray(_dop.C[:_NS]),
    E3=np.ascontiguousarray(_dop.E3),
    E5=np.ascontiguousarray(_dop.E5),
)

__all__ = ["BACKEND", "STATUS_TEXT", "make_system", "OK", "UNDERFLOW", "DOMAIN", "MAXSTEPS", "NONFINITE"]


def kernel_arguments(cfg) -> dict:
    """Flatten a :class:`~melnikovkit.model.SystemConfig` into kernel arguments."""
    lay = cfg.layout
    n, d = lay.n, lay.d
    pots = [V.remap([lay.q(i)], lay.nz) for i, V in enumerate(cfg.penduli.potentials)]
    h0 = cfg.rotator.h0.remap([lay.I(j) for j in range(d)], lay.nz)
    exprs = pots + [h0] + list(cfg.perturbation.exprs)
    tab = compile_tables(exprs)
    clock = cfg.clock
    return dict(
        n=n,
        d=d,
        m=lay.m,
        signs=np.asarray(cfg.penduli.signs, dtype=float),
        term_start=tab.term_start,
        coef=tab.coef,
        fac_start=tab.fac_start,
        fac_var=tab.fac_var,
        fac_kind=tab.fac_kind,
        fac_a=tab.fac_a,
        fac_b=tab.fac_b,
        hamiltonian=cfg.hamiltonian,
        pert_first=n + 1,
        nu=np.asarray(clock.frequencies if clock.linear else np.zeros(lay.m), dtype=float),
        eta_angle=np.full(lay.m, 1 if clock.angular else 0, dtype=np.intc),
        tube=float(cfg.tube),
        I_center=np.asarray(cfg.action_center, dtype=float),
        I_radius=float(cfg.domain.action_radius),
        **TABLEAU,
    )


def make_system(cfg, backend: str | None = None):
    """Kernel object for ``cfg``; custom clocks always use the Python kernel."""
    args = kernel_arguments(cfg)
    want = backend or BACKEND
    if not cfg.clock.linear:
        return PySystem(**args, clock_fn=cfg.clock.advance)
    if want == "cython":
        if CSystem is None:
            raise RuntimeError("compiled kernel is not available")
        return CSystem(**args)
    if want != "python":
        raise ValueError(f"unknown backend {backend!r}")
    return PySystem(**args)
