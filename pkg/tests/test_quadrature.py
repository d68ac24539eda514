import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melnikovkit.quadrature import adaptive_gk, kronrod_rule

# QUADPACK qk21 abscissae and Kronrod weights (published tables)
QK21_X = [0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
          0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
          0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
          0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
          0.294392862701460198131126603103866, 0.148874338981631210884826001129720, 0.0]
QK21_WK = [0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
           0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
           0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
           0.123491976262065851077746700255407, 0.134709217311473325928054001771707,
           0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
           0.149445554002916905664936468389821]


def test_rule_matches_published_tables():
    x, wk, wg = kronrod_rule()
    assert np.allclose(x[::-1][:11], QK21_X, atol=1e-15)
    assert np.allclose(wk[::-1][:11], QK21_WK, atol=1e-15)
    assert wg.sum() == pytest.approx(2.0, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=32, max_size=32))
def test_rule_exact_through_degree_31(c):
    x, wk, _ = kronrod_rule()
    poly = np.polynomial.Polynomial(c)
    exact = poly.integ()(1.0) - poly.integ()(-1.0)
    assert np.dot(wk, poly(x)) == pytest.approx(exact, abs=1e-13)


def test_adaptive_known_integrals():
    r = adaptive_gk(lambda s: np.stack([1 / np.cosh(s) ** 2, np.exp(-s * s)]), -30, 30, 1e-13)
    assert r.converged
    assert r.value[0] == pytest.approx(2.0, abs=1e-12)
    assert r.value[1] == pytest.approx(np.sqrt(np.pi), abs=1e-12)
    assert r.error <= 1e-13


def test_adaptive_refines_oscillatory():
    r = adaptive_gk(lambda s: np.cos(40 * s)[None, :], 0.0, 3.0, 1e-12, width=3.0)
    assert r.panels > 1
    assert r.value[0] == pytest.approx(np.sin(120.0) / 40, abs=1e-11)
