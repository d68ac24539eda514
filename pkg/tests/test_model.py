import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melnikovkit import instances
from melnikovkit.expr import Expr, Factor, Term, cosine_potential
from melnikovkit.model import (
    AugmentedState,
    ClockDriver,
    DomainError,
    HamiltonianField,
    PenduliSpec,
    SystemConfig,
    pendulum_energy,
    perturbation_on_energy,
    perturbed_field,
    unperturbed_field,
)

A = instances.UNIT_AMPLITUDE


def test_pendulum_energy_examples():
    spec = instances.cosine_penduli(1)
    assert pendulum_energy(spec, 0, 0.0, 0.0) == 0.0
    assert pendulum_energy(spec, 0, 0.0, 0.5) == pytest.approx(-1 / (2 * np.pi**2), rel=1e-14)
    neg = instances.cosine_penduli(1, signs=(-1,))
    assert pendulum_energy(neg, 0, 1.0, 0.0) == pytest.approx(-0.5)
    with pytest.raises(IndexError):
        pendulum_energy(spec, 1, 0.0, 0.0)


def test_penduli_validation():
    with pytest.raises(ValueError, match="negative"):
        PenduliSpec((cosine_potential(-0.1),), (1,))
    with pytest.raises(ValueError, match="V\\(0\\)"):
        PenduliSpec((Expr(1, (Term(1.0, (Factor(0, "cos"),)),)),), (1,))
    with pytest.raises(ValueError, match="sign"):
        PenduliSpec((cosine_potential(A),), (2,))


def test_unperturbed_field_examples(ref):
    x = AugmentedState([0.0], [0.0], [0.2], [0.3], [0.0])
    f = unperturbed_field(ref, x)
    assert f.p[0] == 0 and f.q[0] == 0 and f.I[0] == 0
    assert f.phi[0] == pytest.approx(0.2)
    x = AugmentedState([1 / np.pi], [0.5], [0.2], [0.0], [0.0])
    f = unperturbed_field(ref, x)
    assert abs(f.p[0]) < 1e-15
    assert f.q[0] == pytest.approx(1 / np.pi)


def test_perturbed_field_examples(ref):
    x = AugmentedState([0.01], [0.02], [0.2], [0.3], [0.1])
    base = unperturbed_field(ref, x).dynamic_vector()
    assert np.array_equal(perturbed_field(ref, x, 0.0).dynamic_vector(), base)
    # h independent of the dynamic variables
    cfg = instances.with_h(ref, (Term(1.0, (Factor(4, "cos"),)),))
    assert np.allclose(perturbed_field(cfg, x, 0.3).dynamic_vector(), base)
    # h = p1 * cos(2 pi t): only dq/dt changes
    cfg = instances.with_h(ref, (Term(1.0, (Factor(0, "pow", 1), Factor(4, "cos"))),))
    d = perturbed_field(cfg, x, 0.1).dynamic_vector() - base
    assert np.allclose(d, [0.0, 0.1 * np.cos(2 * np.pi * 0.1), 0.0, 0.0], atol=1e-15)


def test_domain_violation(ref):
    x = AugmentedState([0.5], [0.0], [0.2], [0.3], [0.0])
    with pytest.raises(DomainError):
        perturbed_field(ref, x, 0.01)


def test_perturbation_on_energy_saddle_and_pq_independent(ref):
    x = AugmentedState([0.0], [0.0], [0.2], [0.3], [0.4])
    assert perturbation_on_energy(ref, 0, x) == 0.0
    cfg = instances.pq_independent()
    x = AugmentedState([0.2], [0.3], [0.2], [0.3], [0.4])
    assert perturbation_on_energy(cfg, 0, x) == 0.0


states = st.tuples(st.floats(-0.5, 0.5), st.floats(0, 1), st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1))


@settings(max_examples=200, deadline=None)
@given(states)
def test_energy_derivative_is_poisson_bracket(s):
    cfg = instances.reference()
    p, q, I, phi, t = s
    x = AugmentedState([p], [q], [I], [phi], [t])
    h = cfg.perturbation.h
    z = np.array([p, q, I, phi, t])
    e = 1e-6

    def fd(k):
        dz = np.zeros(5)
        dz[k] = e
        return (h(z + dz) - h(z - dz)) / (2 * e)

    P = lambda pp, qq: float(pendulum_energy(cfg.penduli, 0, pp, qq))
    dPdp = (P(p + e, q) - P(p - e, q)) / (2 * e)
    dPdq = (P(p, q + e) - P(p, q - e)) / (2 * e)
    bracket = dPdq * fd(0) - dPdp * fd(1)
    got = perturbation_on_energy(cfg, 0, x)
    assert abs(got - bracket) <= 1e-6 * max(1.0, abs(bracket))


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 1), st.floats(0, 1))
def test_clock_flow_property(a, b, e1, e2):
    for clock in (ClockDriver("affine-time", (1.0,), (e1,)),
                  ClockDriver("periodic", (0.7,), (e1,)),
                  ClockDriver("quasiperiodic", (1.0, np.sqrt(2)), (e1, e2))):
        eta = np.asarray(clock.eta0)
        lhs = clock.advance(clock.advance(eta, a), b)
        rhs = clock.advance(eta, a + b)
        diff = np.abs(lhs - rhs)
        if clock.angular:
            diff = np.minimum(diff, 1 - diff)
        assert np.max(diff) <= 1e-12
    aff = ClockDriver("affine-time", (1.0,), (e1,))
    assert aff.advance(np.array([e1]), a)[0] == pytest.approx(e1 + a, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2))
def test_rotator_frequency_matches_difference(I):
    rot = instances.quadratic_rotator(1)
    h = 1e-6
    fd = (rot.energy(np.array([I + h])) - rot.energy(np.array([I - h]))) / (2 * h)
    assert rot.omega(np.array([I]))[0] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_hamiltonian_derivatives_match_difference(ref):
    rng = np.random.default_rng(1)
    h = ref.perturbation.h
    for _ in range(50):
        z = rng.uniform(-1, 1, 5)
        g = h.grad(z)
        for k in range(5):
            dz = np.zeros(5)
            dz[k] = 1e-6
            fd = (h(z + dz) - h(z - dz)) / 2e-6
            assert abs(g[k] - fd) <= 1e-6 * max(1.0, abs(fd))


def test_config_validation():
    ref = instances.reference()
    with pytest.raises(ValueError, match="periodic"):
        instances.with_h(ref, (Term(1.0, (Factor(3, "pow", 1),)),))
    with pytest.raises(ValueError, match="variables"):
        SystemConfig(ref.penduli, ref.rotator, HamiltonianField(Expr(3)))


def test_augmented_state_wraps_angles():
    x = AugmentedState([0.0], [1.25], [0.0], [-0.25], [3.0])
    assert x.q[0] == pytest.approx(0.25)
    assert x.phi[0] == pytest.approx(0.75)
    assert x.eta[0] == 3.0
