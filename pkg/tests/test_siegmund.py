"""Scale/speed machinery, Feller integral tests, Siegmund duals, exchange."""

import math

import numpy as np
import pytest

from lcsbp.boundary import (
    BoundaryKind,
    classify,
    energy,
    q_function,
    q_value,
)
from lcsbp.errors import DomainError, PreconditionViolation
from lcsbp.mechanism import (
    LogisticModel,
    constant_mechanism,
    drift_mechanism,
    quadratic_mechanism,
    stable_mechanism,
)
from lcsbp.siegmund import (
    DiffusionSpec,
    brownian_spec,
    dual_exchange_check,
    feller_classify,
    scale_speed,
    siegmund_dual,
    stationary_law,
    u_spec,
    v_spec,
)

K = BoundaryKind

CONST_025 = LogisticModel(constant_mechanism(0.25), 1.0)
CONST_06 = LogisticModel(constant_mechanism(0.6), 1.0)
QUADRATIC = LogisticModel(quadratic_mechanism(), 1.0)
STABLE_KILL = LogisticModel(stable_mechanism(1.5, scale=0.5, lam=0.1), 1.0)
DRIFT_UP = LogisticModel(drift_mechanism(1.0), 1.0)
DRIFT_DOWN = LogisticModel(drift_mechanism(-1.0), 1.0)
PURE_DRIFT_SUB = LogisticModel(drift_mechanism(-0.75), 1.0)

CORPUS = [CONST_025, CONST_06, QUADRATIC, STABLE_KILL, DRIFT_UP, DRIFT_DOWN,
          PURE_DRIFT_SUB]

GRID = np.geomspace(1e-3, 1e3, 13)


def tanh_spec() -> DiffusionSpec:
    """Unit-noise diffusion whose scale density is sech^2(x - 1).

    mu = tanh(x - 1) gives s(x) = exp(-2 ln cosh(x-1)), so the total scale
    mass is 1 + tanh(1) and every scale integral has a closed form.
    """
    return DiffusionSpec(
        sigma2=lambda x: 1.0,
        mu=lambda x: math.tanh(x - 1.0),
        boundary_zero=K.REGULAR_ABSORBING,
        boundary_infty=K.NATURAL,
        dsigma2=lambda x: 0.0,
        name="tanh-drift")


class TestScaleSpeed:
    def test_brownian_unit_densities(self):
        ss = scale_speed(brownian_spec())
        for x in GRID:
            assert ss.s(x) == pytest.approx(1.0, rel=1e-12)
            assert ss.m(x) == pytest.approx(1.0, rel=1e-12)
        assert ss.S(1.0, 7.5) == pytest.approx(6.5, rel=1e-12)
        assert ss.M(0.25, 4.0) == pytest.approx(3.75, rel=1e-12)

    def test_constant_killing_power_form(self):
        # mu = lam, sigma2 = c x: s(x) = x^{-2 lam/c}, here x^{-1/2}
        ss = scale_speed(u_spec(CONST_025))
        for x in GRID:
            assert ss.s(x) == pytest.approx(x ** -0.5, rel=1e-10)
        # S(a, b) = 2 (sqrt(b) - sqrt(a))
        assert ss.S(0.09, 25.0) == pytest.approx(2.0 * (5.0 - 0.3), rel=1e-10)

    def test_v_scale_density_matches_q_form(self):
        # s_V(x) proportional to e^{-Q(x)}/x; equal at c = 1 with s_V(1) = 1
        q = q_function(QUADRATIC)
        ss = scale_speed(v_spec(QUADRATIC))
        for x in GRID:
            want = math.exp(-q_value(q, x)) / x
            if want == 0.0:
                continue  # underflow of e^{-x^2} at the grid's far end
            assert ss.s(x) == pytest.approx(want, rel=1e-10)

    def test_v_scale_density_constant_ratio_at_other_c(self):
        model = LogisticModel(constant_mechanism(0.25), 2.0)
        q = q_function(model)
        ss = scale_speed(v_spec(model))
        ratios = [ss.s(x) * x * math.exp(q_value(q, x)) for x in GRID]
        assert max(ratios) == pytest.approx(min(ratios), rel=1e-9)

    def test_densities_multiply_to_inverse_sigma2(self):
        for spec in (u_spec(QUADRATIC), v_spec(STABLE_KILL), tanh_spec()):
            ss = scale_speed(spec)
            for x in (0.05, 0.7, 1.0, 3.3, 40.0):
                logs = ss.log_s(x) + ss.log_m(x) + math.log(float(spec.sigma2(x)))
                assert logs == pytest.approx(0.0, abs=1e-10)
                if abs(ss.log_s(x)) < 600.0:
                    prod = ss.s(x) * ss.m(x) * float(spec.sigma2(x))
                    assert prod == pytest.approx(1.0, rel=1e-12)

    def test_scale_integral_strictly_increasing(self):
        ss = scale_speed(u_spec(STABLE_KILL))
        values = [ss.S_at(x) for x in np.linspace(0.2, 5.0, 9)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_rejects_vanishing_noise(self):
        bad = DiffusionSpec(sigma2=lambda x: 0.0, mu=lambda x: 0.0,
                            boundary_zero=K.NATURAL, boundary_infty=K.NATURAL)
        with pytest.raises(DomainError):
            scale_speed(bad)


class TestFellerClassify:
    def test_brownian(self):
        assert feller_classify(brownian_spec()) == (K.REGULAR_ABSORBING,
                                                    K.NATURAL)
        reflecting = brownian_spec(zero=K.REGULAR_REFLECTING)
        assert feller_classify(reflecting)[0] is K.REGULAR_REFLECTING

    def test_heavy_killing_entrance(self):
        assert feller_classify(u_spec(CONST_06)) == (K.ENTRANCE, K.NATURAL)

    def test_v_exit_at_infinity_under_fast_decay(self):
        assert feller_classify(v_spec(QUADRATIC)) == (K.ENTRANCE, K.EXIT)

    def test_corpus_agrees_with_table_classifier(self):
        for model in CORPUS:
            report = classify(model)
            assert feller_classify(u_spec(model)) == (report.u_zero,
                                                      report.u_infty)
            assert feller_classify(v_spec(model)) == (report.v_zero,
                                                      report.v_infty)

    def test_regular_boundary_requires_declared_subkind(self):
        undeclared = DiffusionSpec(
            sigma2=lambda x: 1.0, mu=lambda x: 0.0,
            boundary_zero=K.NATURAL, boundary_infty=K.NATURAL)
        with pytest.raises(PreconditionViolation):
            feller_classify(undeclared)


class TestSiegmundDual:
    def test_brownian_self_dual(self):
        dual = siegmund_dual(brownian_spec())
        for x in GRID:
            assert dual.sigma2(x) == 1.0
            assert dual.mu(x) == 0.0
        assert dual.boundary_zero is K.REGULAR_REFLECTING
        assert dual.boundary_infty is K.NATURAL

    def test_dual_of_laplace_spec_is_v_spec(self):
        for model in (CONST_06, QUADRATIC, STABLE_KILL, DRIFT_UP):
            dual = siegmund_dual(u_spec(model))
            want = v_spec(model)
            for x in GRID:
                assert dual.mu(x) == pytest.approx(want.mu(x), abs=1e-12)
                assert dual.sigma2(x) == want.sigma2(x)
            assert dual.boundary_zero is want.boundary_zero
            assert dual.boundary_infty is want.boundary_infty

    def test_involution(self):
        # restricted to specs whose 0 boundary admits the construction twice:
        # an absorbing 0 turns reflecting under one dual and is then rejected
        for spec in (u_spec(QUADRATIC), v_spec(QUADRATIC), u_spec(CONST_06),
                     u_spec(DRIFT_DOWN)):
            back = siegmund_dual(siegmund_dual(spec))
            for x in GRID:
                assert back.mu(x) == pytest.approx(float(spec.mu(x)),
                                                   abs=1e-12)
            assert back.boundary_zero is spec.boundary_zero
            assert back.boundary_infty is spec.boundary_infty

    def test_kind_swap_across_corpus(self):
        swap = {K.ENTRANCE: K.EXIT, K.EXIT: K.ENTRANCE, K.NATURAL: K.NATURAL,
                K.REGULAR_ABSORBING: K.REGULAR_REFLECTING}
        for model in CORPUS:
            u = u_spec(model)
            dual = siegmund_dual(u)
            assert dual.boundary_zero is swap[u.boundary_zero]
            assert dual.boundary_infty is swap[u.boundary_infty]

    def test_reflecting_zero_rejected(self):
        with pytest.raises(PreconditionViolation):
            siegmund_dual(v_spec(STABLE_KILL))


class TestExchange:
    def test_brownian(self):
        report = dual_exchange_check(brownian_spec())
        assert report.c0 == pytest.approx(1.0, abs=1e-12)
        assert report.scale_vs_dual_speed < 1e-12
        assert report.speed_vs_dual_scale < 1e-12
        assert report.ij_deviation < 1e-12

    def test_quadratic_pair(self):
        report = dual_exchange_check(u_spec(QUADRATIC))
        assert report.c0 == pytest.approx(1.0, rel=1e-8)
        assert report.scale_vs_dual_speed < 1e-8
        assert report.speed_vs_dual_scale < 1e-8
        assert report.ij_deviation < 1e-8
        # super-exponential scale growth leaves the far grid unrepresentable
        assert report.used >= 15

    def test_constant_killing_pair_full_grid(self):
        report = dual_exchange_check(u_spec(CONST_025))
        assert report.used == len(report.grid)
        assert report.scale_vs_dual_speed < 1e-8
        assert report.speed_vs_dual_scale < 1e-8
        assert report.ij_deviation < 1e-8

    def test_fitted_constant_tracks_noise_scale(self):
        model = LogisticModel(constant_mechanism(0.25), 2.0)
        report = dual_exchange_check(u_spec(model))
        assert report.c0 == pytest.approx(2.0, rel=1e-8)

    def test_energy_equals_scaled_speed_mass(self):
        # E(x0) = c e^{Q(x0)} M_U(0, x0] whenever either side is finite
        for model in (CONST_025, CONST_06, STABLE_KILL):
            q = q_function(model)
            ss = scale_speed(u_spec(model))
            for x0 in (0.5, 1.0, 2.0):
                mass = ss.M_zero(x0).require("speed mass near 0")
                want = model.c * math.exp(q_value(q, x0)) * mass
                assert energy(model, x0) == pytest.approx(want, rel=1e-8)


class TestStationaryLaw:
    def test_brownian_has_none(self):
        assert stationary_law(brownian_spec()) is None

    def test_tanh_drift_closed_form(self):
        cdf = stationary_law(tanh_spec())
        assert cdf is not None
        t1 = math.tanh(1.0)
        for x in (0.1, 0.5, 1.0, 2.0, 5.0):
            want = (math.tanh(x - 1.0) + t1) / (1.0 + t1)
            assert cdf(x) == pytest.approx(want, rel=1e-9)
        median = 1.0 + math.atanh((1.0 - t1) / 2.0)
        assert cdf(median) == pytest.approx(0.5, abs=1e-10)

    def test_cdf_axioms(self):
        cdf = stationary_law(tanh_spec())
        xs = np.geomspace(1e-6, 1e3, 46)
        values = [cdf(x) for x in xs]
        assert all(0.0 <= v <= 1.0 for v in values)
        assert all(b >= a for a, b in zip(values, values[1:]))
        # the density is bounded, so the CDF vanishes linearly at 0
        assert values[0] < 1e-5
        assert values[-1] > 1.0 - 1e-9

    def test_reflecting_boundary_rejected(self):
        with pytest.raises(PreconditionViolation):
            stationary_law(v_spec(STABLE_KILL))
