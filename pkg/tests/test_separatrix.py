import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from melnikovkit import instances
from melnikovkit.expr import Expr, Factor, Term
from melnikovkit.model import PenduliSpec, pendulum_energy
from melnikovkit.separatrix import build_separatrix, family_point, tail_bound


@pytest.fixture(scope="module")
def numeric_ref():
    return build_separatrix(instances.cosine_penduli(1), numeric=True)


def two_harmonic(A, B, sign=1):
    V = Expr(1, (Term(A, (Factor(0, "cos"),)), Term(-A), Term(B, (Factor(0, "cos", 2.0),)), Term(-B)))
    return PenduliSpec((V,), (sign,))


def test_closed_form_values(orb):
    p, q = family_point(orb, [0.0], 0.0)
    assert p[0] == pytest.approx(1 / np.pi, rel=1e-15)
    assert q[0] == pytest.approx(0.5, rel=1e-15)
    assert orb.saddle.lambdas[0] == pytest.approx(1.0, rel=1e-14)
    s = np.linspace(-5, 5, 11)
    pp, qc, _, _ = orb.states([0.0], s)
    assert np.allclose(pp[0], np.cosh(s) ** -1 / np.pi, rtol=1e-14)
    assert np.allclose(np.mod(qc[0], 1), np.mod(2 / np.pi * np.arctan(np.exp(s)), 1), atol=1e-15)


def test_decay_to_saddle(orb):
    _, qc, _, _ = orb.states([0.0], 40.0)
    p, _ = family_point(orb, [0.0], 40.0)
    assert abs(p[0]) < 1e-12 and abs(qc[0, ...]) < 1e-12


def test_numeric_matches_closed_form(orb, numeric_ref):
    s = np.linspace(-25, 25, 2001)
    a = orb.states([0.0], s)
    b = numeric_ref.states([0.0], s)
    for k in range(2):
        assert np.max(np.abs(a[k] - b[k])) <= 1e-8


@pytest.mark.parametrize("sign", [1, -1])
def test_numeric_invariants(sign):
    spec = two_harmonic(instances.UNIT_AMPLITUDE, 0.1 * instances.UNIT_AMPLITUDE, sign)
    orb = build_separatrix(spec)
    lam = orb.saddle.lambdas[0]
    assert lam**2 + spec.d2V(0, 0.0) == pytest.approx(0.0, abs=1e-10)
    s = np.linspace(-15, 15, 3001) / lam
    p, qc, dp, dq = orb.states([0.0], s)
    P = pendulum_energy(spec, 0, p[0], qc[0])
    assert np.max(np.abs(P)) <= 1e-10
    # ODE residual through finite differences of the table
    h = 1e-5
    pp, qp, _, _ = orb.states([0.0], s + h)
    pm, qm, _, _ = orb.states([0.0], s - h)
    dq = (qp - qm + 0.5) % 1.0 - 0.5  # centred offset flips sign at the apex
    assert np.max(np.abs(dq[0] / (2 * h) - sign * p[0])) <= 1e-8
    assert np.max(np.abs((pp - pm)[0] / (2 * h) + sign * spec.dV(0, qc[0]))) <= 1e-8
    # decay beyond 5/lambda
    far = np.abs(s) >= 5 / lam
    amp = np.maximum(np.abs(p[0]), np.abs(qc[0]))[far]
    C = orb.decay_constants[0]
    assert np.all(amp <= C * np.exp(-0.9 * lam * np.abs(s[far])))
    # apex at s = 0
    assert abs(p[0, np.argmin(np.abs(s))]) == pytest.approx(np.max(np.abs(p[0])), rel=1e-6)


def test_numeric_transit_time_oracle(oracle):
    th = oracle["two_harmonic"]
    orb = build_separatrix(two_harmonic(th["A"], th["B"]))
    lp = orb.loops[0]
    s_quarter = brentq(lambda s: lp.eval(s)[1] - 0.25, -20.0, 0.0, xtol=1e-14)
    assert -s_quarter == pytest.approx(th["transit_0.25_to_0.5"], rel=1e-9)


def test_tail_bound_examples(orb):
    assert tail_bound(orb, 0.0) >= max(1 / np.pi, 0.5)
    assert tail_bound(orb, 3.0) / tail_bound(orb, 2.0) == pytest.approx(np.exp(-1.0))
    assert tail_bound(orb, 10.0) <= 2 * (2 / np.pi) * np.exp(-10.0) * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 30), st.floats(0, 30))
def test_tail_bound_dominates(sigma, extra):
    orb = build_separatrix(instances.cosine_penduli(1))
    for s in (sigma + extra, -(sigma + extra)):
        p, qc, _, _ = orb.states([0.0], s)
        assert max(abs(p[0]), abs(qc[0])) <= orb.tail_bound(sigma)


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_family_shift_identity(tau, sigma, c):
    orb = build_separatrix(instances.cosine_penduli(2))
    a = orb.states([tau, tau + 1.0], sigma)
    b = orb.states([tau + c, tau + 1.0 + c], sigma - c)
    assert np.allclose(a[0], b[0], rtol=1e-12, atol=1e-15)
    dq = (a[1] - b[1] + 0.5) % 1.0 - 0.5
    assert np.max(np.abs(dq)) <= 1e-12


def test_csv_export(orb, tmp_path):
    path = tmp_path / "sep.csv"
    orb.to_csv(path, s=np.array([-1.0, 0.0, 1.0]))
    rows = path.read_text().splitlines()
    assert rows[0] == "s,p_1,q_1"
    assert len(rows) == 4
    assert float(rows[2].split(",")[2]) == pytest.approx(0.5)
