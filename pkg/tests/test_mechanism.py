"""Branching-mechanism evaluation, profiles, and jump-measure bookkeeping."""

import math

import numpy as np
import pytest
import scipy.integrate as si
from hypothesis import given, settings
from hypothesis import strategies as hst

from lcsbp.errors import DomainError
from lcsbp.mechanism import (
    BranchingMechanism,
    CompoundPoisson,
    ExponentialJumps,
    FixedJumps,
    LogisticModel,
    StableTail,
    TabulatedDensity,
    constant_mechanism,
    drift_mechanism,
    half_stable_mechanism,
    quadratic_mechanism,
    stable_mechanism,
    stable_tail_constant,
)




CORPUS = [
    constant_mechanism(0.25),
    constant_mechanism(0.6),
    quadratic_mechanism(),
    stable_mechanism(1.5, scale=0.5, lam=0.1),
    drift_mechanism(1.0),
    drift_mechanism(-1.0),
    drift_mechanism(-0.75),
    BranchingMechanism(lam=0.3, levy=CompoundPoisson(2.0, ExponentialJumps(0.7))),
]


def test_constant_mechanism_value():
    assert constant_mechanism(0.25).evaluate(2.0) == -0.25


def test_pure_quadratic_value():
    assert quadratic_mechanism().evaluate(3.0) == pytest.approx(9.0, abs=1e-12)


def test_stable_scaled_to_power():
    psi = stable_mechanism(1.5, scale=1.0)
    assert psi.evaluate(1.0) == pytest.approx(1.0, abs=1e-6)
    assert psi.evaluate_quad(1.0) == pytest.approx(1.0, abs=1e-6)


def test_stable_closed_form_vs_quadrature():
    psi = stable_mechanism(1.5, scale=1.0)
    for x in np.geomspace(0.01, 100.0, 13):
        cf = psi.evaluate(float(x))
        q = psi.evaluate_quad(float(x))
        assert abs(cf - q) <= 1e-6 * max(abs(cf), 1e-12), x


def test_stable_tail_constant_value():
    # c_alpha = alpha(alpha-1)/Gamma(2-alpha); at alpha=1.5 this is
    # 0.75/Gamma(0.5) = 0.75/sqrt(pi)
    assert stable_tail_constant(1.5) == pytest.approx(0.75 / math.sqrt(math.pi), rel=1e-14)


def test_profile_explicit_root():
    psi = BranchingMechanism(sigma=math.sqrt(2.0), gamma=-1.0)
    assert psi.profile().rho == pytest.approx(1.0, rel=1e-10)


def test_profile_quadratic_root_at_zero():
    p = quadratic_mechanism().profile()
    assert p.rho == 0.0
    assert not p.subordinator_exponent


def test_profile_constant_mechanism():
    p = constant_mechanism(0.5).profile()
    assert math.isinf(p.rho)
    assert p.subordinator_exponent
    assert p.delta == 0.0


def test_profile_pure_drift_subordinator():
    p = drift_mechanism(-0.75).profile()
    assert p.delta == pytest.approx(0.75, abs=1e-14)
    assert p.subordinator_exponent
    assert p.prime_at_zero == pytest.approx(-0.75, abs=1e-14)


def test_profile_stable_with_killing():
    psi = stable_mechanism(1.5, scale=0.5, lam=0.1)
    p = psi.profile()
    assert p.rho == pytest.approx((0.1 / 0.5) ** (1.0 / 1.5), rel=1e-10)
    assert p.prime_at_zero == pytest.approx(0.0, abs=1e-12)
    assert p.delta == -math.inf


def test_subordinator_iff_rho_infinite():
    for psi in CORPUS:
        p = psi.profile()
        assert p.subordinator_exponent == math.isinf(p.rho), psi


@given(
    idx=hst.integers(min_value=0, max_value=len(CORPUS) - 1),
    a=hst.floats(min_value=1e-3, max_value=30.0),
    w1=hst.floats(min_value=1e-3, max_value=10.0),
    w2=hst.floats(min_value=1e-3, max_value=10.0),
)
@settings(max_examples=60, deadline=None)
def test_convexity_property(idx, a, w1, w2):
    psi = CORPUS[idx]
    b, c = a + w1, a + w1 + w2
    chord = ((c - b) * psi.evaluate(a) + (b - a) * psi.evaluate(c)) / (c - a)
    scale = max(abs(psi.evaluate(a)), abs(psi.evaluate(c)), 1.0)
    assert psi.evaluate(b) <= chord + 1e-9 * scale


@given(
    idx=hst.integers(min_value=0, max_value=len(CORPUS) - 1),
    a=hst.floats(min_value=1e-3, max_value=30.0),
    w=hst.floats(min_value=1e-3, max_value=30.0),
)
@settings(max_examples=60, deadline=None)
def test_monotone_ratio_property(idx, a, w):
    psi = CORPUS[idx]
    b = a + w
    scale = max(abs(psi.evaluate(a)) / a, abs(psi.evaluate(b)) / b, 1.0)
    assert psi.evaluate(a) / a <= psi.evaluate(b) / b + 1e-9 * scale


def test_psi_at_zero_is_minus_lam():
    for psi in CORPUS:
        assert psi.evaluate(0.0) == pytest.approx(-psi.lam, abs=1e-12)


def test_compound_poisson_closed_vs_quadrature():
    psi = BranchingMechanism(levy=CompoundPoisson(2.0, ExponentialJumps(0.7)))
    for x in [0.1, 1.0, 5.0, 20.0]:
        cf, q = psi.evaluate(x), psi.evaluate_quad(x)
        assert abs(cf - q) <= 1e-8 * max(abs(cf), 1.0)


def test_compound_poisson_moments_against_quadrature():
    levy = CompoundPoisson(2.0, ExponentialJumps(0.7))
    dens = lambda h: 2.0 * math.exp(-h / 0.7) / 0.7
    assert levy.mean_between(0.0, 1.0) == pytest.approx(
        si.quad(lambda h: h * dens(h), 0, 1)[0], rel=1e-10)
    assert levy.small_jump_var(0.3) == pytest.approx(
        si.quad(lambda h: h * h * dens(h), 0, 0.3)[0], rel=1e-10)
    assert levy.total_mass() == pytest.approx(2.0, rel=1e-12)


def test_fixed_jump_law():
    levy = CompoundPoisson(1.5, FixedJumps(2.0))
    psi = BranchingMechanism(levy=levy)
    assert psi.evaluate(0.8) == pytest.approx(1.5 * math.expm1(-1.6), rel=1e-12)
    assert levy.mass_between(1.0, math.inf) == 1.5
    assert levy.mass_between(0.0, 1.0) == 0.0
    assert levy.mean_above_one() == 3.0


def test_tabulated_sqrt_mechanism_matches_target():
    psi = half_stable_mechanism()
    for x in [0.01, 0.5, 1.0, 4.0, 100.0]:
        assert psi.evaluate(x) == pytest.approx(-math.sqrt(x), abs=2e-6 * max(1.0, math.sqrt(x)))


def test_tabulated_profile():
    p = half_stable_mechanism().profile()
    assert p.subordinator_exponent
    assert math.isinf(p.rho)
    assert p.prime_at_zero == -math.inf
    assert p.delta == pytest.approx(0.0, abs=1e-9)


def test_tabulated_moment_against_quadrature():
    levy = half_stable_mechanism().levy
    ref = si.quad(lambda h: h ** -1.5 / (2 * math.sqrt(math.pi)), 0.5, 3.0)[0]
    assert levy.mass_between(0.5, 3.0) == pytest.approx(ref, rel=1e-9)


def test_tabulated_validation_errors():
    with pytest.raises(DomainError):
        TabulatedDensity((1.0, 2.0), (1.0, 1.0), tail_exponent=-0.5)
    with pytest.raises(DomainError):
        TabulatedDensity((2.0, 1.0), (1.0, 1.0), tail_exponent=-2.0)
    with pytest.raises(DomainError):
        # head slope -4 would make int h^2 pi diverge at 0
        TabulatedDensity((0.1, 1.0), (1e4, 1.0), tail_exponent=-2.0)


def test_sampling_conditional_means():
    rng = np.random.default_rng(2024)
    cases = [
        (StableTail(1.5, 1.0), 0.2, math.inf),
        (CompoundPoisson(1.0, ExponentialJumps(0.7)), 0.3, 1.0),
        (half_stable_mechanism().levy, 0.5, 3.0),
    ]
    for levy, a, b in cases:
        s = levy.sample_between(rng, 150_000, a, b)
        assert s.min() > a
        if math.isfinite(b):
            assert s.max() <= b
        target = levy.mean_between(a, b) / levy.mass_between(a, b)
        se = s.std() / math.sqrt(s.size)
        assert abs(s.mean() - target) < 4.0 * se + 1e-4, (levy, s.mean(), target)


def test_construction_validation():
    with pytest.raises(DomainError):
        BranchingMechanism(lam=-0.1)
    with pytest.raises(DomainError):
        StableTail(2.5, 1.0)
    with pytest.raises(DomainError):
        CompoundPoisson(0.0, ExponentialJumps(1.0))
    with pytest.raises(DomainError):
        LogisticModel(constant_mechanism(0.1), c=0.0)
    with pytest.raises(DomainError):
        constant_mechanism(0.1).evaluate(-1.0)


def test_mechanisms_are_hashable():
    for psi in CORPUS:
        hash(LogisticModel(psi, 1.0))
