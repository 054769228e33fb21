"""Shell-scan verdicts and the cached antiderivative."""

import math

import numpy as np
import pytest

from lcsbp.errors import Indeterminate
from lcsbp.quadrature import (
    CachedAntiderivative,
    Verdict,
    improper_lower,
    improper_upper,
    quad_interval,
    quad_log,
    series_verdict,
)


def test_power_law_near_zero_converges():
    r = improper_lower(lambda x: x ** -0.5, 1.0)
    assert r.verdict is Verdict.FINITE
    assert r.value == pytest.approx(2.0, rel=1e-10)


def test_slow_power_law_converges_within_shell_budget():
    # ratio per shell is 2^{-1/2} ~ 0.707: needs geometric extrapolation,
    # raw truncation alone would exhaust the shell budget
    r = improper_lower(lambda x: x ** -0.5, 1.0)
    assert r.shells < 20


def test_log_divergence_near_zero():
    r = improper_lower(lambda x: 1.0 / x, 1.0)
    assert r.verdict is Verdict.INFINITE
    assert r.infinite


def test_tail_power_law():
    r = improper_upper(lambda x: x ** -2.0, 1.0)
    assert r.verdict is Verdict.FINITE
    assert r.value == pytest.approx(1.0, rel=1e-10)


def test_tail_log_divergence():
    r = improper_upper(lambda x: 1.0 / x, 1.0)
    assert r.verdict is Verdict.INFINITE


def test_exponential_tail():
    r = improper_upper(lambda x: math.exp(-x), 1.0)
    assert r.value == pytest.approx(math.exp(-1.0), rel=1e-10)


def test_non_settling_integrand_is_indeterminate():
    r = improper_lower(lambda x: x ** -0.5 * (1.0 + 0.3 * math.sin(math.log(x))), 1.0)
    assert r.verdict is Verdict.INDETERMINATE
    with pytest.raises(Indeterminate):
        r.require("oscillating integral")


def test_require_passes_through_finite_value():
    r = improper_upper(lambda x: x ** -3.0, 2.0)
    assert r.require("cubic tail") == pytest.approx(0.125, rel=1e-10)


def test_series_geometric():
    s = series_verdict((0.5 ** k for k in range(10 ** 6)), "geometric")
    assert s.verdict is Verdict.FINITE
    assert s.value == pytest.approx(2.0, rel=1e-10)


def test_series_harmonic_diverges():
    s = series_verdict((1.0 / (k + 1) for k in range(10 ** 6)), "harmonic")
    assert s.verdict is Verdict.INFINITE


def test_quad_log_matches_direct():
    direct = quad_interval(lambda x: math.exp(-x) * x, 1e-3, 40.0)
    logged = quad_log(lambda x: math.exp(-x) * x, 1e-3, 40.0)
    assert logged == pytest.approx(direct, rel=1e-9)


def test_cached_antiderivative_matches_log():
    A = CachedAntiderivative(lambda x: 1.0 / x, base=1.0)
    rng = np.random.default_rng(7)
    xs = np.exp(rng.uniform(-18.0, 13.0, size=100))
    worst = max(abs(A(float(x)) - math.log(x)) for x in xs)
    assert worst < 1e-11 * 18.0


def test_cached_antiderivative_narrow_span():
    A = CachedAntiderivative(lambda x: 1.0 / x, base=1.0)
    a = 3.0e5
    b = a + 0.01
    ref = math.log1p((b - a) / a)
    assert A.between(a, b) == pytest.approx(ref, rel=1e-12)


def test_cached_antiderivative_between_consistency():
    A = CachedAntiderivative(lambda x: x * math.exp(-x), base=2.0)
    # antiderivative of x e^{-x} is -(1+x)e^{-x}
    exact = lambda x: -(1.0 + x) * math.exp(-x)
    for a, b in [(0.5, 0.6), (0.5, 4.0), (1e-4, 30.0)]:
        assert A.between(a, b) == pytest.approx(exact(b) - exact(a), rel=1e-9, abs=1e-14)
