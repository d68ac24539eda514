"""Sparse sum-of-products expressions with analytic derivatives.

An :class:`Expr` is ``sum_k c_k * prod_j f_kj(z[v_kj])`` where each factor
``f`` is drawn from a small fixed family:

========  ===================================
kind      factor
========  ===================================
``one``   1
``pow``   x**a  (a a non-negative integer)
``cos``   cos(2*pi*(a*x + b))
``sin``   sin(2*pi*(a*x + b))
``sech``  sech(a*x + b)
``gauss`` exp(-a*(x - b)**2)
========  ===================================

The same representation is evaluated here with numpy (vectorized over
points) and flattened into integer/float tables by :func:`compile_tables`
for the compiled integration kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

KIND_CODES = {"one": 0, "pow": 1, "cos": 2, "sin": 3, "sech": 4, "gauss": 5}
MAX_FACTORS = 16


@dataclass(frozen=True)
class Factor:
    """Single factor ``f(z[var])`` of a product term."""

    var: int
    kind: str
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown factor kind {self.kind!r}")
        if self.var < 0:
            raise ValueError("factor variable index must be non-negative")
        if self.kind == "pow" and (self.a < 0 or float(self.a) != int(self.a)):
            raise ValueError("pow factor needs a non-negative integer exponent")

    def is_periodic(self) -> bool:
        """True when the factor has period 1 in its variable."""
        if self.kind == "one":
            return True
        if self.kind in ("cos", "sin"):
            return float(self.a) == round(self.a)
        if self.kind == "pow":
            return self.a == 0
        return False

    def values(self, x):
        """Return ``(f, f', f'')`` at ``x``."""
        a, b = self.a, self.b
        if self.kind == "one":
            one = np.ones_like(x)
            return one, 0.0 * x, 0.0 * x
        if self.kind == "pow":
            m = int(a)
            if m == 0:
                return np.ones_like(x), 0.0 * x, 0.0 * x
            if m == 1:
                return x, np.ones_like(x), 0.0 * x
            d2 = m * (m - 1) * x ** (m - 2) if m >= 2 else 0.0 * x
            return x**m, m * x ** (m - 1), d2
        if self.kind in ("cos", "sin"):
            w = TWO_PI * a
            u = TWO_PI * (a * x + b)
            c, s = np.cos(u), np.sin(u)
            if self.kind == "cos":
                return c, -w * s, -w * w * c
            return s, w * c, -w * w * s
        if self.kind == "sech":
            u = a * x + b
            sh = _sech(u)
            th = np.tanh(u)
            return sh, -a * sh * th, a * a * sh * (th * th - sh * sh)
        # gauss
        r = x - b
        g = np.exp(-a * r * r)
        return g, -2.0 * a * r * g, (4.0 * a * a * r * r - 2.0 * a) * g


def _sech(u):
    e = np.exp(-np.abs(u))
    return 2.0 * e / (1.0 + e * e)


@dataclass(frozen=True)
class Term:
    """Coefficient times a product of factors."""

    coef: float
    factors: tuple[Factor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if len(self.factors) > MAX_FACTORS:
            raise ValueError(f"at most {MAX_FACTORS} factors per term")


@dataclass(frozen=True)
class Expr:
    """Sum of :class:`Term` objects over ``nvars`` variables.

    Parameters
    ----------
    nvars : int
        Length of the variable vector ``z``.
    terms : sequence of Term
    """

    nvars: int
    terms: tuple[Term, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            for f in t.factors:
                if f.var >= self.nvars:
                    raise ValueError(
                        f"factor variable {f.var} out of range for {self.nvars} variables"
                    )

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, nvars: int) -> "Expr":
        return cls(nvars, ())

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Expr":
        return cls(nvars, (Term(float(c)),))

    def __add__(self, other: "Expr") -> "Expr":
        if other.nvars != self.nvars:
            raise ValueError("variable counts differ")
        return Expr(self.nvars, self.terms + other.terms)

    def scaled(self, c: float) -> "Expr":
        return Expr(self.nvars, tuple(Term(c * t.coef, t.factors) for t in self.terms))

    def remap(self, mapping: Sequence[int], nvars: int) -> "Expr":
        """Rename variable ``k`` to ``mapping[k]`` in a space of ``nvars``."""
        terms = tuple(
            Term(t.coef, tuple(Factor(mapping[f.var], f.kind, f.a, f.b) for f in t.factors))
            for t in self.terms
        )
        return Expr(nvars, terms)

    def variables(self) -> set[int]:
        return {f.var for t in self.terms for f in t.factors if f.kind != "one"}

    @property
    def is_zero(self) -> bool:
        return all(t.coef == 0.0 for t in self.terms)

    def periodic_in(self, var: int) -> bool:
        """True when every factor acting on ``var`` has period 1."""
        return all(f.is_periodic() for t in self.terms for f in t.factors if f.var == var)

    # evaluation -----------------------------------------------------------
    def _prep(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[0] != self.nvars:
            raise ValueError(f"expected {self.nvars} variables, got {z.shape[0]}")
        return z

    def __call__(self, z):
        """Value at ``z`` (shape ``(nvars, ...)``)."""
        z = self._prep(z)
        out = np.zeros(z.shape[1:])
        for t in self.terms:
            v = np.full(z.shape[1:], t.coef)
            for f in t.factors:
                v = v * f.values(z[f.var])[0]
            out = out + v
        return out

    def grad(self, z):
        """Gradient, shape ``(nvars, ...)``."""
        return self.value_and_grad(z)[1]

    def value_and_grad(self, z):
        z = self._prep(z)
        shape = z.shape[1:]
        val = np.zeros(shape)
        grad = np.zeros((self.nvars,) + shape)
        for t in self.terms:
            vals = [f.values(z[f.var]) for f in t.factors]
            prod = np.full(shape, t.coef)
            for g, _, _ in vals:
                prod = prod * g
            val = val + prod
            for j, f in enumerate(t.factors):
                part = np.full(shape, t.coef) * vals[j][1]
                for k, (g, _, _) in enumerate(vals):
                    if k != j:
                        part = part * g
                grad[f.var] += part
        return val, grad

    def hessian(self, z):
        """Hessian, shape ``(nvars, nvars, ...)``."""
        z = self._prep(z)
        shape = z.shape[1:]
        hess = np.zeros((self.nvars, self.nvars) + shape)
        for t in self.terms:
            vals = [f.values(z[f.var]) for f in t.factors]
            nf = len(t.factors)
            for j in range(nf):
                for k in range(nf):
                    part = np.full(shape, t.coef)
                    for l, (g, g1, g2) in enumerate(vals):
                        if j == k:
                            part = part * (g2 if l == j else g)
                        elif l == j or l == k:
                            part = part * g1
                        else:
                            part = part * g
                    hess[t.factors[j].var, t.factors[k].var] += part
        return hess

    # serialization --------------------------------------------------------
    def to_records(self, names: Sequence[str]) -> list[dict]:
        out = []
        for t in self.terms:
            rec = {"coef": float(t.coef)}
            facs = []
            for f in t.factors:
                d = {"var": names[f.var], "fn": f.kind}
                if f.kind != "one":
                    d["a"] = float(f.a)
                    d["b"] = float(f.b)
                facs.append(d)
            if facs:
                rec["factors"] = facs
            out.append(rec)
        return out


def cosine(var: int, nvars: int, coef: float = 1.0, freq: float = 1.0, phase: float = 0.0) -> Expr:
    """``coef * cos(2*pi*(freq*z[var] + phase))``."""
    return Expr(nvars, (Term(coef, (Factor(var, "cos", freq, phase),)),))


def cosine_potential(amplitude: float) -> Expr:
    """Pendulum potential ``A*(cos(2*pi*q) - 1)`` in one variable."""
    return Expr(1, (Term(amplitude, (Factor(0, "cos", 1.0, 0.0),)), Term(-amplitude)))


def cosine_amplitude(expr: Expr) -> float | None:
    """Return ``A`` when ``expr`` is exactly ``A*(cos(2*pi*q) - 1)`` with A > 0."""
    amp = 0.0
    const = 0.0
    for t in expr.terms:
        facs = [f for f in t.factors if not (f.kind == "one" or (f.kind == "pow" and f.a == 0))]
        if not facs:
            const += t.coef
        elif len(facs) == 1 and facs[0].kind == "cos" and facs[0].a == 1.0 and facs[0].b == 0.0:
            amp += t.coef
        else:
            return None
    if amp > 0 and abs(const + amp) <= 1e-15 * amp:
        return amp
    return None


@dataclass(frozen=True)
class ExprTables:
    """Flat integer/float tables describing a list of expressions."""

    term_start: np.ndarray
    coef: np.ndarray
    fac_start: np.ndarray
    fac_var: np.ndarray
    fac_kind: np.ndarray
    fac_a: np.ndarray
    fac_b: np.ndarray


def compile_tables(exprs: Iterable[Expr]) -> ExprTables:
    """Flatten expressions into CSR-style arrays (expression -> terms -> factors)."""
    term_start = [0]
    coef, fac_start = [], [0]
    fv, fk, fa, fb = [], [], [], []
    for e in exprs:
        for t in e.terms:
            coef.append(t.coef)
            for f in t.factors:
                fv.append(f.var)
                fk.append(KIND_CODES[f.kind])
                fa.append(f.a)
                fb.append(f.b)
            fac_start.append(len(fv))
        term_start.append(len(coef))
    return ExprTables(
        term_start=np.asarray(term_start, dtype=np.intc),
        coef=np.asarray(coef, dtype=float),
        fac_start=np.asarray(fac_start, dtype=np.intc),
        fac_var=np.asarray(fv, dtype=np.intc),
        fac_kind=np.asarray(fk, dtype=np.intc),
        fac_a=np.asarray(fa, dtype=float),
        fac_b=np.asarray(fb, dtype=float),
    )
