"""Branching flow without competition: the cumulant ODE and its boundary laws.

The population transform obeys du/dt = -Psi(u) started from u_0 = x, and
every law here is a functional of that flow: survival probabilities come
from the limits u_t(infty) and u_t(0+), while the hitting-time transforms
integrate exp(-theta * time-to-level) against the stationary profile.
"""

from __future__ import annotations

import math
from functools import lru_cache

from scipy.integrate import solve_ivp

from .boundary import grey_dynkin
from .errors import DomainError, NumericalFailure
from .mechanism import BranchingMechanism, LogisticModel
from .quadrature import (
    CachedAntiderivative,
    improper_lower,
    improper_upper,
    quad_interval,
)

__all__ = [
    "CumulantFlow",
    "boundary_probabilities",
    "boundary_time_laplace",
    "cumulant",
    "inverse_cumulant",
]

_BIG_START = 1.0e8
_BIG_CHECK = 1.0e9
# ratio 100 keeps the two leading small-start corrections (a fractional
# power and a linear term) well separated for the acceleration step
_SMALL_STARTS = (1.0e-6, 1.0e-8, 1.0e-10, 1.0e-12)
_LIMIT_RTOL = 1e-6
_ACCEL_RTOL = 1e-5
_EDGE_MASS = 1e-10
_RTOL_ODE = 1e-10
_ATOL_ODE = 1e-14


class CumulantFlow:
    """Flow map (t, x) -> u_t(x) with one dense trajectory cached per start.

    Instances hold mutable per-start caches; share one instance within a
    single computation, not across threads.
    """

    def __init__(self, mech: BranchingMechanism):
        self.mech = mech
        self._dense: dict[float, tuple[float, object]] = {}

    def at(self, t: float, x: float) -> float:
        if t == 0.0:
            return float(x)
        x = float(x)
        horizon, sol = self._dense.get(x, (0.0, None))
        if t > horizon:
            horizon = max(2.0 * t, 1.0)
            sol = self._solve(x, horizon)
            self._dense[x] = (horizon, sol)
        return float(sol(t)[0])

    def _solve(self, x: float, horizon: float):
        mech = self.mech

        def rhs(t, y):
            return (-mech.evaluate(max(y[0], 0.0)),)

        def jac(t, y):
            return ((-float(mech.derivative(max(y[0], 0.0))),),)

        res = solve_ivp(rhs, (0.0, horizon), (x,), method="LSODA", jac=jac,
                        dense_output=True, rtol=_RTOL_ODE, atol=_ATOL_ODE)
        if not res.success:
            raise NumericalFailure(
                f"flow integration from {x} failed: {res.message}")
        return res.sol


@lru_cache(maxsize=128)
def _conditions(mech: BranchingMechanism) -> tuple[bool, bool]:
    # the accessibility tests depend on Psi alone, not on the competition rate
    return grey_dynkin(LogisticModel(mech, 1.0))


def _from_infinity(flow: CumulantFlow, t: float) -> float:
    ua = flow.at(t, _BIG_START)
    ub = flow.at(t, _BIG_CHECK)
    rel = abs(ub - ua) / max(abs(ub), 1e-300)
    if rel <= _LIMIT_RTOL:
        return ub
    # near t = 0 the starts have not merged yet; the offset equals the
    # descent time from the start level, geometric in the start level, so
    # acceleration over two overlapping triples recovers the limit with the
    # gap between the accelerated values as the error estimate
    vals = [flow.at(t, s) for s in (1e6, 1e7, _BIG_START, _BIG_CHECK)]
    first = _aitken(*vals[:3])
    second = _aitken(*vals[1:])
    if first is None or second is None:
        raise NumericalFailure(
            "flow limit from large starts is not contracting",
            estimate=ub, achieved=rel)
    gap = abs(second - first) / max(abs(second), 1e-300)
    if gap > _ACCEL_RTOL:
        raise NumericalFailure(
            "flow limit from large starts did not stabilize",
            estimate=second, achieved=gap)
    return second


def _aitken(v1: float, v2: float, v3: float) -> float | None:
    d1 = v2 - v1
    d2 = v3 - v2
    denom = d2 - d1
    if denom == 0.0 or abs(d2) >= abs(d1):
        return None
    return v3 - d2 * d2 / denom


def _from_zero(flow: CumulantFlow, t: float) -> float:
    # the small-start bias can vanish like a fractional power of the start
    # (square root for a sqrt-shaped mechanism), so a plain two-start check
    # is not enough: accelerate geometric starts twice and certify by the
    # agreement of the two accelerated values
    vals = [flow.at(t, s) for s in _SMALL_STARTS]
    scale = max(abs(vals[-1]), 1e-300)
    if abs(vals[-1] - vals[-2]) <= 1e-12 * scale:
        return vals[-1]
    first = _aitken(*vals[:3])
    second = _aitken(*vals[1:])
    if first is None or second is None:
        raise NumericalFailure(
            "flow limit from small starts is not contracting",
            estimate=vals[-1])
    gap = abs(second - first) / max(abs(second), 1e-300)
    if gap > _LIMIT_RTOL:
        raise NumericalFailure(
            "flow limit from small starts did not stabilize",
            estimate=second, achieved=gap)
    return second


def cumulant(mech: BranchingMechanism, t: float, x: float,
             flow: CumulantFlow | None = None) -> float:
    """u_t(x) solving du/dt = -Psi(u), u_0 = x, with x in [0, inf] admitted.

    x = inf is reached by large-start stabilization when the mechanism
    allows entry from infinity, and stays inf otherwise; x = 0 symmetrically
    leaves the origin only when escape from zero is possible.
    """
    if not isinstance(mech, BranchingMechanism):
        raise DomainError("expected a BranchingMechanism")
    if math.isnan(t) or t < 0.0:
        raise DomainError("time must be >= 0")
    if math.isnan(x) or x < 0.0:
        raise DomainError("x must lie in [0, inf]")
    if t == 0.0:
        return float(x)
    if flow is None:
        flow = CumulantFlow(mech)
    if math.isinf(x):
        if not _conditions(mech)[0]:
            return math.inf
        return _from_infinity(flow, t)
    if x == 0.0:
        if not _conditions(mech)[1]:
            return 0.0
        return _from_zero(flow, t)
    return flow.at(t, x)


def inverse_cumulant(mech: BranchingMechanism, t: float, y: float,
                     flow: CumulantFlow | None = None) -> float:
    """v_t(y) solving dv/dt = +Psi(v), v_0 = y: the inverse of the flow map."""
    if math.isnan(t) or t < 0.0:
        raise DomainError("time must be >= 0")
    if not (0.0 < y < math.inf):
        raise DomainError("y must lie in (0, inf)")
    if t == 0.0:
        return float(y)
    mech_eval = mech.evaluate
    mech_der = mech.derivative

    def rhs(s, v):
        return (mech_eval(max(v[0], 0.0)),)

    def jac(s, v):
        return ((float(mech_der(max(v[0], 0.0))),),)

    res = solve_ivp(rhs, (0.0, t), (float(y),), method="LSODA", jac=jac,
                    rtol=_RTOL_ODE, atol=_ATOL_ODE)
    if not res.success:
        raise NumericalFailure(
            f"inverse flow integration from {y} failed: {res.message}")
    return float(res.y[0, -1])


def boundary_probabilities(mech: BranchingMechanism, z: float,
                           t: float) -> tuple[float, float]:
    """(P[hit 0 by t], P[blow up by t]) for the process started at mass z."""
    if not (0.0 < z < math.inf):
        raise DomainError("z must lie in (0, inf)")
    if not (t > 0.0):
        raise DomainError("t must be > 0")
    flow = CumulantFlow(mech)
    u_inf = cumulant(mech, t, math.inf, flow=flow)
    u_zero = cumulant(mech, t, 0.0, flow=flow)
    extinct = 0.0 if math.isinf(u_inf) else math.exp(-z * u_inf)
    exploded = -math.expm1(-z * u_zero)
    return extinct, exploded


def _lt_extinction(mech: BranchingMechanism, z: float, theta: float,
                   rho: float) -> float:
    # int_rho^inf z e^{-zx - theta G(x)} dx with G(x) = int_x^inf du/Psi(u),
    # the time for the flow to fall from x to the root; work in the shifted
    # variable w = x - rho so the antiderivative grid never crosses the
    # integrable singularity of 1/Psi at the root
    def g(w: float) -> float:
        return 1.0 / mech.evaluate(rho + w)

    tail = improper_upper(g, 1.0).require("flow descent time")
    if not math.isfinite(tail):
        raise NumericalFailure("descent-time integral did not converge")
    inner = CachedAntiderivative(g, base=1.0)

    def big_g(w: float) -> float:
        return tail - inner(w)

    def f(x: float) -> float:
        w = x - rho
        if w <= 0.0:
            return 0.0
        return z * math.exp(-z * x - theta * big_g(w))

    # shrink toward the root until the skipped sliver is negligible, but not
    # into the zone where the root's own rounding error could flip the sign
    # of Psi
    floor = 1e-12 * max(rho, 1.0)
    delta = 0.5
    while True:
        # on (rho, rho+delta] the integrand is at most its right endpoint
        # envelope, G being decreasing
        bound = delta * z * math.exp(-z * rho - theta * big_g(delta))
        if bound < _EDGE_MASS or delta <= floor:
            break
        delta *= 0.5
    if bound >= 1e-6:
        raise NumericalFailure(
            "could not isolate the root singularity", achieved=bound)

    mid = rho + 1.0
    head = quad_interval(f, rho + delta, mid)
    tail_part = improper_upper(f, mid).require("extinction-time transform")
    return min(max(head + tail_part, 0.0), 1.0)


def _lt_explosion(mech: BranchingMechanism, z: float, theta: float,
                  rho: float) -> float:
    # int_0^rho z e^{-zx - theta H(x)} dx with H(x) = int_0^x du/(-Psi(u)),
    # the time for the flow to climb from 0+ to x
    def g(u: float) -> float:
        return -1.0 / mech.evaluate(u)

    base = 0.5 * min(rho, 1.0)
    head_h = improper_lower(g, base).require("flow ascent time")
    if not math.isfinite(head_h):
        raise NumericalFailure("ascent-time integral did not converge")
    inner = CachedAntiderivative(g, base=base)

    def big_h(x: float) -> float:
        return head_h + inner(x)

    def f(x: float) -> float:
        if x <= 0.0:
            return 0.0
        return z * math.exp(-z * x - theta * big_h(x))

    if math.isinf(rho):
        val = quad_interval(f, 0.0, 1.0)
        val += improper_upper(f, 1.0).require("explosion-time transform")
        return min(max(val, 0.0), 1.0)

    floor = 1e-12 * rho
    delta = 0.25 * rho
    while True:
        bound = delta * z * math.exp(-theta * big_h(rho - delta))
        if bound < _EDGE_MASS or delta <= floor:
            break
        delta *= 0.5
    if bound >= 1e-6:
        raise NumericalFailure(
            "could not isolate the root singularity", achieved=bound)
    val = quad_interval(f, 0.0, base) + quad_interval(f, base, rho - delta)
    return min(max(val, 0.0), 1.0)


def boundary_time_laplace(mech: BranchingMechanism, z: float,
                          theta: float) -> tuple[float, float]:
    """Laplace transforms (E[e^{-theta * time-to-0}], E[e^{-theta * blowup}]).

    A component whose boundary is unreachable is 0: the corresponding time
    is almost surely infinite.
    """
    if not (0.0 < z < math.inf):
        raise DomainError("z must lie in (0, inf)")
    if not (0.0 < theta < math.inf):
        raise DomainError("theta must lie in (0, inf)")
    grey, dynkin = _conditions(mech)
    rho = mech.profile().rho
    lt_ext = _lt_extinction(mech, z, theta, rho) if grey else 0.0
    lt_exp = _lt_explosion(mech, z, theta, rho) if dynkin else 0.0
    return lt_ext, lt_exp
