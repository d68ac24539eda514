"""Acceptance criteria A1-A10, one summary line each.

Run ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also collected in the terminal summary.
"""
import time

import numpy as np
import pytest

from conftest import record
from melnikovkit import instances
from melnikovkit.expr import Factor, Term
from melnikovkit.melnikov import (
    DEFAULT_TOL,
    additivity_gap,
    find_critical_tau,
    grad_tau_potential,
    melnikov_potential,
    melnikov_vector,
)
from melnikovkit.separatrix import build_separatrix
from melnikovkit.verify import (
    action_jump,
    jump_sweep,
    measure_splitting,
    stable_graph_value,
    unstable_graph_value,
)

SPLIT_EPS = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
JUMP_EPS = [4e-3, 2e-3, 1e-3, 5e-4]
# jump test point fixed in advance: largest |dM*/dtheta| on the I = 0.2 circle
JUMP_POINT = dict(I=0.2, phi=0.0, t=0.25)


class Clock:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0

    @property
    def ok(self):
        return self.elapsed < self.limit

    def __str__(self):
        return f"{self.elapsed:.1f}s/<{self.limit:g}s"


def _dtau_richardson(cfg, orb, tau, I, phi, t, h=2e-3):
    def D(k):
        a = melnikov_potential(cfg, orb, [tau + k], [I], [phi], [t]).value
        b = melnikov_potential(cfg, orb, [tau - k], [I], [phi], [t]).value
        return (a - b) / (2 * k)

    return (4 * D(h / 2) - D(h)) / 3


def test_a1_gradient_identity(ref, orb):
    worst_fd = worst_q = 0.0
    with Clock(10) as clk:
        for tau in np.linspace(-1.0, 1.0, 5):
            for phi in np.linspace(0.0, 0.8, 5):
                for I in (0.1, 0.3, 0.5):
                    mv = melnikov_vector(ref, orb, [tau], [I], [phi], [0.1]).value[0]
                    pot = melnikov_potential(ref, orb, [tau], [I], [phi], [0.1]).value
                    fd = _dtau_richardson(ref, orb, tau, I, phi, 0.1)
                    gq = grad_tau_potential(ref, orb, [tau], [I], [phi], [0.1]).value[0]
                    worst_fd = max(worst_fd, abs(mv - fd) / (1 + abs(pot)))
                    worst_q = max(worst_q, abs(mv - gq) / (1 + abs(pot)))
    ok = max(worst_fd, worst_q) <= 2e-8
    record("A1", ok and clk.ok,
           f"max |Mv - dM/dtau|/(1+|M|): differenced {worst_fd:.2e}, differentiated integrand "
           f"{worst_q:.2e} (<= 2e-8), {clk}")
    assert ok and clk.ok


def test_a2_closed_form(ref, orb):
    rng = np.random.default_rng(20260417)
    pts = np.column_stack([rng.uniform(-1, 1, 20), rng.uniform(0.05, 0.6, 20),
                           rng.uniform(0, 1, 20), rng.uniform(0, 1, 20)])
    worst = 0.0
    with Clock(5) as clk:
        for tau, I, phi, t in pts:
            q = melnikov_potential(ref, orb, [tau], [I], [phi], [t]).value
            cf = instances.reference_closed_form(tau, I, phi, t)
            worst = max(worst, abs(q - cf) / max(abs(cf), 1e-300))
    ok = worst <= 1e-8
    record("A2", ok and clk.ok, f"max relative |M - closed form| = {worst:.2e} over 20 points (<= 1e-8), {clk}")
    assert ok and clk.ok


def test_a3_shift_and_invariance(ref, orb):
    I = 0.2
    grid = [(phi, t) for phi in np.linspace(0, 0.75, 4) for t in np.linspace(0, 0.75, 4)]
    shift_m = shift_tau = inv = 0.0
    with Clock(10) as clk:
        base = find_critical_tau(ref, orb, None, [I], [0.0], [0.0], grid=16)
        for phi, t in grid:
            a = melnikov_potential(ref, orb, [0.1], [I], [phi], [t]).value
            b = melnikov_potential(ref, orb, [0.1 + t], [I], [phi + t * I], [2 * t]).value
            shift_m = max(shift_m, abs(a - b))
            theta = phi - t * I
            c0 = find_critical_tau(ref, orb, base.tau_star + theta / I, [I], [theta], [0.0])
            # offset seed so Newton must converge onto the shifted root
            ct = find_critical_tau(ref, orb, c0.tau_star + t + 0.05, [I], [phi], [t])
            shift_tau = max(shift_tau, abs(ct.tau_star[0] - (c0.tau_star[0] + t)))
            m_t = melnikov_potential(ref, orb, ct.tau_star, [I], [phi], [t]).value
            m_0 = melnikov_potential(ref, orb, c0.tau_star, [I], [theta], [0.0]).value
            inv = max(inv, abs(m_t - m_0))
    worst = max(shift_m, shift_tau, inv)
    ok = worst <= 1e-8
    record("A3", ok and clk.ok,
           f"M shift {shift_m:.1e}, tau* shift {shift_tau:.1e}, M* invariance {inv:.1e} (<= 1e-8), {clk}")
    assert ok and clk.ok


def test_a4_splitting_order(ref, orb):
    with Clock(60) as clk:
        r_ref = measure_splitting(ref, orb, [0.3], [0.2], [0.05], [0.0], SPLIT_EPS)
        diss = instances.dissipative()
        r_diss = measure_splitting(diss, orb, [0.3], [0.2], [0.05], [0.0], SPLIT_EPS)
    ok = r_ref.fit.slope >= 1.7 and r_diss.fit.slope >= 1.5
    record("A4", ok and clk.ok,
           f"residual slope reference {r_ref.fit.slope:.3f} (>= 1.7), dissipative "
           f"{r_diss.fit.slope:.3f} (>= 1.5), {clk}")
    assert ok and clk.ok


@pytest.fixture(scope="module")
def jump_crit(ref, orb):
    p = JUMP_POINT
    return find_critical_tau(ref, orb, None, [p["I"]], [p["phi"]], [p["t"]], grid=16)


def test_a5_action_jump(ref, orb, jump_crit):
    with Clock(60) as clk:
        rep = action_jump(ref, orb, jump_crit, 1e-3)
    scale = abs(rep.predicted[0])
    literal = abs(rep.measured[0] - rep.predicted_opposite[0]) / scale
    corrected = abs(rep.measured[0] - rep.predicted[0]) / scale
    ok = literal <= 0.05
    record("A5", ok and clk.ok,
           f"|dI - (-eps dM*/dtheta)|/|eps dM*/dtheta| = {literal:.3f} (<= 0.05); measured "
           f"{rep.measured[0]:.4e}, eps dM*/dtheta {rep.predicted[0]:.4e}, {clk}")
    record("A5+", corrected <= 0.05,
           f"same jump against +eps dM*/dtheta: relative error {corrected:.3f} (<= 0.05)")
    assert ok and clk.ok


def test_a5_jump_sweep(ref, orb, jump_crit):
    with Clock(60) as clk:
        sw = jump_sweep(ref, orb, jump_crit, JUMP_EPS)
    ok = sw.fit.slope >= 1.7
    record("A5s", ok and clk.ok, f"jump residual slope {sw.fit.slope:.3f} (>= 1.7), {clk}")
    assert ok and clk.ok


def test_a6_additivity(orb2):
    cfg = instances.two_pendulum(coupling=0.5)
    lam = orb2.lambda_plus
    I, phi, t = [0.2], [0.1], [0.3]
    noise = DEFAULT_TOL
    with Clock(20) as clk:
        gaps = [additivity_gap(cfg, orb2, [0.0, dT / lam], I, phi, t) for dT in (2, 4, 6, 8, 10)]
        far = additivity_gap(cfg, orb2, [0.0, 15 / lam], I, phi, t)
        scale = max(1.0, abs(melnikov_potential(cfg, orb2, [0.0, 15 / lam], I, phi, t).value))
        additive = instances.two_pendulum()
        add_gap = max(additivity_gap(additive, orb2, [a, b], I, phi, t)
                      for a, b in ((0.0, 0.3), (0.7, -1.2), (2.0, 2.0)))
    mono = all(b <= a + 2 * noise for a, b in zip(gaps, gaps[1:]))
    ok = mono and far <= 1e-5 * scale and add_gap <= noise
    record("A6", ok and clk.ok,
           f"gaps {', '.join(f'{g:.1e}' for g in gaps)} monotone={mono}; "
           f"gap at 15/lambda {far:.1e} (<= {1e-5 * scale:.1e}); additive h {add_gap:.1e} (<= {noise:g}), {clk}")
    assert ok and clk.ok


def test_a7_h3_certificate(ref, orb):
    with Clock(5) as clk:
        crit = find_critical_tau(ref, orb, None, [0.2], [0.0], [0.25], grid=16)
    r = np.array(crit.residual_history)
    above = r[:-1] > 1e-6 * crit.scale
    ratios = r[1:][above] / r[:-1][above] ** 2
    quad = bool(len(ratios) >= 2 and np.all(ratios <= 1.0) and np.ptp(np.log10(ratios)) <= 1.0)
    ok = quad and crit.rank == 1 and crit.condition < 1e6
    record("A7", ok and clk.ok,
           f"residuals {', '.join(f'{x:.1e}' for x in r)}; r_k+1/r_k^2 {', '.join(f'{x:.3f}' for x in ratios)}; "
           f"rank {crit.rank}, condition {crit.condition:.2g}, {clk}")
    assert ok and clk.ok


def test_a8_trivial_suite(orb):
    zero = instances.zero_perturbation()
    free = instances.pq_independent()
    tol = DEFAULT_TOL
    worst_q = worst_split = worst_jump = 0.0
    with Clock(10) as clk:
        for cfg in (zero, free):
            for tau, I, phi, t in ((0.3, 0.2, 0.05, 0.0), (-0.7, 0.4, 0.6, 0.35)):
                worst_q = max(worst_q,
                              abs(melnikov_vector(cfg, orb, [tau], [I], [phi], [t]).value[0]),
                              abs(melnikov_potential(cfg, orb, [tau], [I], [phi], [t]).value))
            rep = measure_splitting(cfg, orb, [0.3], [0.2], [0.05], [0.0], SPLIT_EPS[:2])
            worst_split = max(worst_split, float(np.max(np.abs(rep.measured))))
            crit = find_critical_tau(cfg, orb, [0.0], [0.2], [0.0], [0.0])
            jr = action_jump(cfg, orb, crit, 1e-3, allow_degenerate=True)
            worst_jump = max(worst_jump, abs(jr.measured[0]), abs(jr.predicted[0]))
        ref = instances.reference()
        gs = stable_graph_value(ref, orb, [0.3], [0.2], [0.05], [0.0], 0.0)
        gu = unstable_graph_value(ref, orb, [0.3], [0.2], [0.05], [0.0], 0.0)
        worst_eps0 = max(abs(gs.P[0]), abs(gu.P[0]))
    # graphs and jumps come from integrations at rtol 1e-10 / atol 1e-12
    ok = worst_q <= tol and worst_split <= 1e-11 and worst_jump <= 1e-11 and worst_eps0 <= 1e-11
    record("A8", ok and clk.ok,
           f"|Mv|,|M| {worst_q:.1e} (<= {tol:g}); splitting {worst_split:.1e}, jump {worst_jump:.1e}, "
           f"eps=0 graphs {worst_eps0:.1e} (<= 1e-11), {clk}")
    assert ok and clk.ok


def test_a9_window_doubling(ref, orb):
    rng = np.random.default_rng(7)
    fails = 0
    worst = 0.0
    with Clock(20) as clk:
        for k in range(50):
            tau, I, phi, t = rng.uniform(-1, 1), rng.uniform(0.05, 0.6), rng.uniform(0, 1), rng.uniform(0, 1)
            fn = melnikov_vector if k % 2 else melnikov_potential
            a = fn(ref, orb, [tau], [I], [phi], [t])
            b = fn(ref, orb, [tau], [I], [phi], [t], window=2 * a.window)
            change = float(np.max(np.abs(np.asarray(b.value) - np.asarray(a.value))))
            worst = max(worst, change / a.tail_bound)
            fails += change >= a.tail_bound
    ok = fails == 0
    record("A9", ok and clk.ok,
           f"window doubling: worst change/tail_bound {worst:.2e}, {fails}/50 violations, {clk}")
    assert ok and clk.ok


def test_a10_clock_generality():
    worst = 0.0
    with Clock(5) as clk:
        for t0 in (0.0, 0.37, 2.1):
            affine, torus = instances.quasiperiodic_pair(t0)
            orb = build_separatrix(affine.penduli)
            for tau, I, phi in ((0.3, 0.2, 0.05), (-0.6, 0.45, 0.8)):
                a = melnikov_vector(affine, orb, [tau], [I], [phi], affine.clock.eta0).value
                b = melnikov_vector(torus, orb, [tau], [I], [phi], torus.clock.eta0).value
                worst = max(worst, float(np.max(np.abs(a - b))))
    ok = worst <= 1e-10
    record("A10", ok and clk.ok, f"max |Mv affine - Mv torus| = {worst:.1e} (<= 1e-10), {clk}")
    assert ok and clk.ok
