"""One-dimensional diffusion machinery on (0, infinity).

Scale and speed densities driven by a cached drift exponent, Feller integral
tests for boundary kinds, Siegmund dual construction with the boundary
correspondence, a scale/speed exchange report for dual pairs, and the
stationary law of the dual when one exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .boundary import BoundaryKind, classify
from .errors import DomainError, PreconditionViolation
from .mechanism import LogisticModel
from .quadrature import (
    MAX_SHELLS,
    CachedAntiderivative,
    ImproperResult,
    improper_lower,
    improper_upper,
    quad_interval,
    series_verdict,
)

__all__ = [
    "DiffusionSpec",
    "ScaleSpeed",
    "ExchangeReport",
    "scale_speed",
    "feller_classify",
    "siegmund_dual",
    "dual_exchange_check",
    "stationary_law",
    "u_spec",
    "v_spec",
    "brownian_spec",
]

_EXP_CAP = 700.0
_REGULAR = (BoundaryKind.REGULAR_REFLECTING, BoundaryKind.REGULAR_ABSORBING)

_DUAL_KIND = {
    BoundaryKind.ENTRANCE: BoundaryKind.EXIT,
    BoundaryKind.EXIT: BoundaryKind.ENTRANCE,
    BoundaryKind.NATURAL: BoundaryKind.NATURAL,
    BoundaryKind.REGULAR_ABSORBING: BoundaryKind.REGULAR_REFLECTING,
    BoundaryKind.REGULAR_REFLECTING: BoundaryKind.REGULAR_ABSORBING,
}


def _exp(v: float) -> float:
    return math.exp(min(v, _EXP_CAP))


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """Coefficients and declared boundary kinds of a diffusion on (0, inf).

    sigma2 is the squared diffusion coefficient, mu the drift.  dsigma2,
    when supplied, is the analytic derivative of sigma2; otherwise a central
    difference with relative step 1e-6 is used where a derivative is needed.
    A regular boundary must be declared with its sub-kind (reflecting or
    absorbing): the integral tests cannot distinguish the two.
    """

    sigma2: Callable[[float], float]
    mu: Callable[[float], float]
    boundary_zero: BoundaryKind
    boundary_infty: BoundaryKind
    dsigma2: Optional[Callable[[float], float]] = None
    name: str = ""

    def d_sigma2(self, x: float) -> float:
        if self.dsigma2 is not None:
            return float(self.dsigma2(x))
        h = 1e-6 * max(abs(x), 1e-6)
        return (float(self.sigma2(x + h)) - float(self.sigma2(x - h))) / (2.0 * h)


class ScaleSpeed:
    """Scale density s (normalized to s(1) = 1) and speed density m.

    s(x) = exp(-int_1^x 2 mu/sigma2) and m = 1/(sigma2 s), so s*m*sigma2 = 1
    pointwise.  The drift exponent is cached on a dyadic log grid, making
    repeated density and integral queries cheap.  S and M integrate the
    densities between interior points; the *_zero and *_infty variants scan
    the improper ends and return a finiteness verdict instead of a bare
    number.
    """

    def __init__(self, spec: DiffusionSpec, rtol: float = 1e-11):
        self.spec = spec
        self._E = CachedAntiderivative(
            lambda u: 2.0 * float(spec.mu(u)) / float(spec.sigma2(u)),
            base=1.0, rtol=rtol)
        self._S = CachedAntiderivative(self.s, base=1.0, rtol=rtol)
        self._M = CachedAntiderivative(self.m, base=1.0, rtol=rtol)

    def exponent(self, x: float) -> float:
        return self._E(float(x))

    def log_s(self, x: float) -> float:
        return -self._E(float(x))

    def log_m(self, x: float) -> float:
        x = float(x)
        return self._E(x) - math.log(float(self.spec.sigma2(x)))

    def s(self, x: float) -> float:
        return _exp(self.log_s(x))

    def m(self, x: float) -> float:
        return _exp(self.log_m(x))

    def S(self, a: float, b: float) -> float:
        return self._S.between(a, b)

    def M(self, a: float, b: float) -> float:
        return self._M.between(a, b)

    def S_at(self, x: float) -> float:
        return self._S(float(x))

    def M_at(self, x: float) -> float:
        return self._M(float(x))

    def S_zero(self, x: float = 1.0) -> ImproperResult:
        return improper_lower(self.s, x)

    def M_zero(self, x: float = 1.0) -> ImproperResult:
        return improper_lower(self.m, x)

    def S_infty(self, x: float = 1.0) -> ImproperResult:
        return improper_upper(self.s, x)

    def M_infty(self, x: float = 1.0) -> ImproperResult:
        return improper_upper(self.m, x)


def scale_speed(spec: DiffusionSpec, rtol: float = 1e-11) -> ScaleSpeed:
    """Build the scale/speed pair for spec, validating sigma2 > 0."""
    for x in (1e-3, 1.0, 1e3):
        if not float(spec.sigma2(x)) > 0.0:
            raise DomainError(f"sigma2 must be positive on (0, inf); "
                              f"sigma2({x}) = {spec.sigma2(x)}")
    return ScaleSpeed(spec, rtol=rtol)


def _gap_logmass(width: float, Da: float, Db: float) -> float:
    """log of the integral over one grid gap of exp(linear exponent).

    Exact for a linearly interpolated exponent; on steep gaps the bias
    against the true convex exponent is the endpoint-to-average slope
    ratio, a smooth O(1) factor that cancels out of shell-mass ratios.
    """
    if width <= 0.0:
        return -math.inf
    add = abs(Db - Da)
    if add <= 1e-9:
        return 0.5 * (Da + Db) + math.log(width)
    return (max(Da, Db) + math.log1p(-math.exp(-add)) - math.log(add)
            + math.log(width))


def _feller_secondary(ss: ScaleSpeed, at_zero: bool, inner_is_scale: bool,
                      x0: float = 1.0, tail_rel: float = 1e-3) -> ImproperResult:
    """Feller secondary integral by a log-domain dyadic shell scan.

    Accumulates the inner antiderivative (of s or m) from x0 toward the
    boundary entirely in log space, so products of a huge antiderivative
    with a vanishing density stay representable.  All samples sit on the
    cached drift exponent's own anchor grid, so each new shell costs a
    fixed handful of anchor extensions regardless of how steep the
    exponent has become.  Only the verdict is consumed downstream, so the
    scan exits on a loose tail criterion.
    """
    E = ss._E
    per = max(1, round(math.log(2.0) / E.step))
    j0 = round(math.log(x0) / E.step)
    sgn = -1 if at_zero else 1
    pts: dict[int, tuple[float, float, float]] = {}

    def point(j: int) -> tuple[float, float, float]:
        got = pts.get(j)
        if got is None:
            x = E.grid_x(j)
            e = E.at_index(j)
            got = (x, -e, e - math.log(float(ss.spec.sigma2(x))))
            pts[j] = got
        return got

    sel_in = 1 if inner_is_scale else 2
    sel_out = 2 if inner_is_scale else 1

    def masses() -> Iterator[float]:
        acc = -math.inf
        j = j0
        for _ in range(MAX_SHELLS + 1):
            nodes = [point(j + sgn * i) for i in range(per + 1)]
            lg = np.empty(per + 1)
            lg[0] = acc + nodes[0][sel_out]
            for i in range(per):
                width = abs(nodes[i + 1][0] - nodes[i][0])
                pm = _gap_logmass(width, nodes[i][sel_in],
                                  nodes[i + 1][sel_in])
                acc = float(np.logaddexp(acc, pm))
                lg[i + 1] = acc + nodes[i + 1][sel_out]
            widths = np.abs(np.diff([n[0] for n in nodes]))
            shell = np.logaddexp(lg[:-1], lg[1:]) + np.log(widths / 2.0)
            ls = float(np.logaddexp.reduce(shell))
            j += sgn * per
            if ls > _EXP_CAP:
                yield math.inf
            elif ls < -700.0:
                yield 0.0
            else:
                yield math.exp(ls)

    side = "0" if at_zero else "infinity"
    kind = "entrance" if inner_is_scale else "exit"
    return series_verdict(masses(), what=f"Feller {kind} test at {side}",
                          tail_rel=tail_rel)


def feller_classify(spec: DiffusionSpec,
                    x0: float = 1.0) -> tuple[BoundaryKind, BoundaryKind]:
    """Boundary kinds at 0 and infinity from the four integral tests.

    A regular verdict reports the sub-kind declared on the spec: reflection
    versus absorption is extra information the integrals cannot see.
    """
    ss = scale_speed(spec)

    def one_side(at_zero: bool) -> BoundaryKind:
        side = "0" if at_zero else "infinity"
        s_res = ss.S_zero(x0) if at_zero else ss.S_infty(x0)
        m_res = ss.M_zero(x0) if at_zero else ss.M_infty(x0)
        s_res.require(f"scale mass near {side}")
        m_res.require(f"speed mass near {side}")
        if s_res.finite and m_res.finite:
            declared = spec.boundary_zero if at_zero else spec.boundary_infty
            if declared not in _REGULAR:
                raise PreconditionViolation(
                    f"boundary {side} is regular; the spec must declare "
                    f"reflecting or absorbing, got {declared.value}")
            return declared
        if m_res.finite:
            sec = _feller_secondary(ss, at_zero, inner_is_scale=True, x0=x0)
            sec.require(f"entrance test at {side}")
            return BoundaryKind.ENTRANCE if sec.finite else BoundaryKind.NATURAL
        if s_res.finite:
            sec = _feller_secondary(ss, at_zero, inner_is_scale=False, x0=x0)
            sec.require(f"exit test at {side}")
            return BoundaryKind.EXIT if sec.finite else BoundaryKind.NATURAL
        return BoundaryKind.NATURAL

    return one_side(True), one_side(False)


def siegmund_dual(spec: DiffusionSpec) -> DiffusionSpec:
    """Dual diffusion: same noise, drift (1/2)(sigma2)' - mu, kinds swapped.

    Requires the boundary 0 of spec to be inaccessible or absorbing; a
    regular reflecting 0 falls outside the construction.
    """
    if spec.boundary_zero is BoundaryKind.REGULAR_REFLECTING:
        raise PreconditionViolation(
            "Siegmund dual needs 0 inaccessible or absorbing; "
            "got regular reflecting")

    def mu_dual(x: float, _spec: DiffusionSpec = spec) -> float:
        return 0.5 * _spec.d_sigma2(x) - float(_spec.mu(x))

    return DiffusionSpec(
        sigma2=spec.sigma2,
        mu=mu_dual,
        boundary_zero=_DUAL_KIND[spec.boundary_zero],
        boundary_infty=_DUAL_KIND[spec.boundary_infty],
        dsigma2=spec.dsigma2,
        name=f"dual({spec.name})" if spec.name else "dual")


@dataclass(frozen=True)
class ExchangeReport:
    """Scale/speed exchange between a diffusion and its Siegmund dual.

    c0 is the fitted constant in S = c0 * M_dual; the two deviations are the
    worst relative mismatches of the exchanged integral pairs over the grid
    points where both sides are representable in float range.  i_primal and
    j_dual are the matched interior integral tests.
    """

    c0: float
    scale_vs_dual_speed: float
    speed_vs_dual_scale: float
    i_primal: float
    j_dual: float
    ij_deviation: float
    grid: tuple
    used: int


def _guarded_integral(ss: ScaleSpeed, log_density: Callable[[float], float],
                      integral_at: Callable[[float], float], x: float) -> float:
    """integral from 1 to x of the density, or nan when it would overflow."""
    lo, hi = (x, 1.0) if x < 1.0 else (1.0, x)
    probes = np.geomspace(lo, hi, 7)
    peak = max(log_density(float(p)) for p in probes)
    if peak + math.log(hi - lo + 1e-300) > 690.0:
        return math.nan
    return integral_at(x)


def dual_exchange_check(spec: DiffusionSpec, grid=None, l: float = 0.5,
                        upper: float = 2.0) -> ExchangeReport:
    """Fit S = c0 * M_dual and verify both exchange identities plus I = J.

    Grid points whose integrals exceed float range (super-exponential scale
    growth) are dropped; the identities are checked wherever both sides are
    representable.
    """
    dual = siegmund_dual(spec)
    A = scale_speed(spec)
    B = scale_speed(dual)
    if grid is None:
        grid = np.geomspace(1e-3, 1e3, 25)
    grid = np.asarray(grid, dtype=float)

    su = np.array([_guarded_integral(A, A.log_s, A.S_at, x) for x in grid])
    mv = np.array([_guarded_integral(B, B.log_m, B.M_at, x) for x in grid])
    mu_ = np.array([_guarded_integral(A, A.log_m, A.M_at, x) for x in grid])
    sv = np.array([_guarded_integral(B, B.log_s, B.S_at, x) for x in grid])

    pair1 = np.isfinite(su) & np.isfinite(mv)
    pair2 = np.isfinite(mu_) & np.isfinite(sv)
    fit = pair1 & (np.abs(mv) > 1e-12 * np.nanmax(np.abs(mv[pair1])))
    if not fit.any():
        raise DomainError("no usable grid points for the exchange fit")
    c0 = float(np.median(su[fit] / mv[fit]))

    def deviation(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
        worst = 0.0
        for av, bv in zip(a[mask], b[mask]):
            denom = max(abs(av), abs(bv))
            if denom > 0.0:
                worst = max(worst, abs(av - bv) / denom)
        return worst

    dev1 = deviation(su, c0 * mv, pair1)
    dev2 = deviation(c0 * mu_, sv, pair2)

    i_primal = quad_interval(lambda v: A.S(l, v) * A.m(v), l, upper,
                             rtol=1e-10)
    j_dual = quad_interval(lambda v: B.S(v, upper) * B.m(v), l, upper,
                           rtol=1e-10)
    ij_dev = abs(i_primal - j_dual) / max(abs(i_primal), abs(j_dual), 1e-300)

    return ExchangeReport(
        c0=c0,
        scale_vs_dual_speed=dev1,
        speed_vs_dual_scale=dev2,
        i_primal=i_primal,
        j_dual=j_dual,
        ij_deviation=ij_dev,
        grid=tuple(float(x) for x in grid),
        used=int((pair1 & pair2).sum()))


def stationary_law(spec: DiffusionSpec) -> Optional[Callable[[float], float]]:
    """CDF of the limiting law of the Siegmund dual, when one exists.

    Requires both boundaries of spec to be natural or absorbing.  Returns
    x -> S(0, x]/S(0, inf) when the total scale mass is finite (the dual is
    then positive recurrent), else None.
    """
    allowed = (BoundaryKind.NATURAL, BoundaryKind.EXIT,
               BoundaryKind.REGULAR_ABSORBING)
    if spec.boundary_zero not in allowed or spec.boundary_infty not in allowed:
        raise PreconditionViolation(
            "stationary law of the dual needs both boundaries of the primal "
            "natural or absorbing")
    ss = scale_speed(spec)
    lower = ss.S_zero(1.0).require("scale mass near 0")
    upper = ss.S_infty(1.0).require("scale mass near infinity")
    total = lower + upper
    if math.isinf(total):
        return None

    def cdf(x: float) -> float:
        val = (lower + ss.S_at(x)) / total
        return min(1.0, max(0.0, val))

    return cdf


def u_spec(model: LogisticModel) -> DiffusionSpec:
    """Diffusion dual via Laplace transform: noise c*x, drift -psi(x)."""
    c = model.c
    report = classify(model)
    return DiffusionSpec(
        sigma2=lambda x: c * x,
        mu=lambda x: -float(model.psi.evaluate(x)),
        boundary_zero=report.u_zero,
        boundary_infty=report.u_infty,
        dsigma2=lambda x: c,
        name="U")


def v_spec(model: LogisticModel) -> DiffusionSpec:
    """Siegmund dual of the Laplace dual: noise c*x, drift c/2 + psi(x)."""
    c = model.c
    report = classify(model)
    return DiffusionSpec(
        sigma2=lambda x: c * x,
        mu=lambda x: 0.5 * c + float(model.psi.evaluate(x)),
        boundary_zero=report.v_zero,
        boundary_infty=report.v_infty,
        dsigma2=lambda x: c,
        name="V")


def brownian_spec(zero: BoundaryKind = BoundaryKind.REGULAR_ABSORBING,
                  ) -> DiffusionSpec:
    """Standard Brownian motion on (0, inf); 0 is regular, infinity natural."""
    if zero not in _REGULAR:
        raise DomainError("Brownian motion has a regular boundary at 0; "
                          "declare reflecting or absorbing")
    return DiffusionSpec(
        sigma2=lambda x: 1.0,
        mu=lambda x: 0.0,
        boundary_zero=zero,
        boundary_infty=BoundaryKind.NATURAL,
        dsigma2=lambda x: 0.0,
        name="brownian")
