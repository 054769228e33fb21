"""Boundary classification of the branching process and its dual diffusions.

Everything here reduces to three integral tests on the mechanism:

* the energy integral E = int_0^{x0} e^{-Q(x)} dx/x with
  Q(x) = int_{x0}^x 2 Psi(u)/(c u) du, deciding whether infinity is
  accessible for the branching process;
* the ratio 2*lam/c, separating reflecting from exit behavior at infinity;
* the upper tail test int^inf dx/Psi (extinction reachable) and the lower
  tail test int_0 dx/(-Psi) (explosion reachable for the dual flow).

The classification of both boundaries of the branching process Z, its
Laplace-dual diffusion U (dU = sqrt(cU) dB - Psi(U) dt) and the Siegmund
dual V (dV = sqrt(cV) dB + (c/2 + Psi(V)) dt) follows from these by fixed
decision tables.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import Indeterminate, PreconditionViolation
from .mechanism import LogisticModel
from .quadrature import CachedAntiderivative, Verdict, improper_lower, improper_upper

__all__ = [
    "BoundaryKind",
    "BoundaryReport",
    "QFunction",
    "classify",
    "energy",
    "grey_dynkin",
    "q_value",
    "s_z_zero",
]

_EXP_CAP = 700.0  # e^700 is representable; larger exponents saturate


def _exp(v: float) -> float:
    return math.exp(min(v, _EXP_CAP))


class BoundaryKind(str, enum.Enum):
    EXIT = "Exit"
    ENTRANCE = "Entrance"
    REGULAR_REFLECTING = "RegularReflecting"
    REGULAR_ABSORBING = "RegularAbsorbing"
    NATURAL = "Natural"

    def __str__(self) -> str:  # pragma: no cover - repr convenience
        return self.value


class QFunction:
    """Q(x) = int_{x0}^x 2 Psi(u)/(c u) du, memoized on a dyadic log grid.

    Q is the shared exponent of every scale/speed density in the model:
    s_U = e^Q, m_U = e^{-Q}/(cx), s_V = e^{-Q}/(cx) up to constants.
    """

    def __init__(self, model: LogisticModel, x0: float = 1.0):
        if x0 <= 0.0:
            raise PreconditionViolation("reference point x0 must be positive")
        self.model = model
        self.x0 = x0
        psi, c = model.psi, model.c
        self._anti = CachedAntiderivative(
            lambda u: 2.0 * psi.evaluate(u) / (c * u), base=x0)

    def __call__(self, x: float) -> float:
        if x <= 0.0:
            raise PreconditionViolation("Q is defined for x > 0")
        return self._anti(x)

    def between(self, a: float, b: float) -> float:
        """Q(b) - Q(a) without cancellation on narrow spans."""
        return self._anti.between(a, b)


def q_value(q: QFunction, x: float) -> float:
    """Value of the memoized Q function at x > 0."""
    return q(x)


@lru_cache(maxsize=None)
def _q_cached(model: LogisticModel, x0: float) -> QFunction:
    return QFunction(model, x0)


def q_function(model: LogisticModel, x0: float = 1.0) -> QFunction:
    """Shared memoized QFunction for the model (canonical x0 = 1)."""
    return _q_cached(model, x0)


def energy(model: LogisticModel, x0: float = 1.0) -> float:
    """E = int_0^{x0} e^{-Q(x)} dx/x; +inf when infinity is inaccessible.

    Raises Indeterminate when the dyadic scan cannot settle the verdict.
    """
    q = q_function(model, x0)
    res = improper_lower(lambda x: _exp(-q(x)) / x, x0)
    if res.verdict is Verdict.INDETERMINATE:
        raise Indeterminate("energy integral did not settle", partial=res.value)
    return res.value if res.finite else math.inf


def grey_dynkin(model: LogisticModel) -> tuple[bool, bool]:
    """(int^inf dx/Psi < inf, int_0 dx/(-Psi) < inf).

    The upper test requires Psi > 0 eventually, the lower one Psi < 0 near
    0; when the sign condition fails the test is False outright.
    """
    psi = model.psi
    prof = psi.profile()

    if math.isinf(prof.rho):
        grey = False
    else:
        a = max(2.0 * prof.rho, 1.0)
        while psi.evaluate(a) <= 0.0:
            a *= 2.0
        res = improper_upper(lambda x: 1.0 / psi.evaluate(x), a)
        if res.verdict is Verdict.INDETERMINATE:
            raise Indeterminate("upper integral test did not settle",
                                partial=res.value)
        grey = res.finite

    if psi.lam > 0.0:
        b = min(prof.rho, 1.0) if prof.rho > 0.0 else 0.5
        b = 0.5 * b if math.isfinite(b) else 0.5
    elif psi.evaluate(2.0 ** -40) < 0.0:
        b = 0.5 * min(prof.rho, 1.0)
    else:
        b = None
    if b is None:
        dynkin = False
    else:
        res = improper_lower(lambda x: -1.0 / psi.evaluate(x), b)
        if res.verdict is Verdict.INDETERMINATE:
            raise Indeterminate("lower integral test did not settle",
                                partial=res.value)
        dynkin = res.finite
    return grey, dynkin


def s_z_zero(model: LogisticModel, x0: float = 1.0) -> float:
    """S_Z(0) = int_0^inf e^{-Q(x)} dx/(cx), in (0, inf]."""
    q = q_function(model, x0)
    c = model.c
    lower = improper_lower(lambda x: _exp(-q(x)) / (c * x), x0)
    if lower.verdict is Verdict.INDETERMINATE:
        raise Indeterminate("S_Z(0) lower part did not settle")
    if lower.infinite:
        return math.inf
    upper = improper_upper(lambda x: _exp(-q(x)) / (c * x), x0)
    if upper.verdict is Verdict.INDETERMINATE:
        raise Indeterminate("S_Z(0) upper part did not settle")
    return math.inf if upper.infinite else lower.value + upper.value


@dataclass(frozen=True)
class BoundaryReport:
    """Integral diagnostics plus the boundary kind of each process end."""

    model: LogisticModel
    energy: float
    two_lambda_over_c: float
    grey: bool
    dynkin: bool
    z_zero: BoundaryKind
    z_infty: BoundaryKind
    u_zero: BoundaryKind
    u_infty: BoundaryKind
    v_zero: BoundaryKind
    v_infty: BoundaryKind
    s_z_zero: float
    converges_to_zero: bool

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "two_lambda_over_c": self.two_lambda_over_c,
            "grey": self.grey,
            "dynkin": self.dynkin,
            "z_zero": self.z_zero.value,
            "z_infty": self.z_infty.value,
            "u_zero": self.u_zero.value,
            "u_infty": self.u_infty.value,
            "v_zero": self.v_zero.value,
            "v_infty": self.v_infty.value,
            "s_z_zero": self.s_z_zero,
            "converges_to_zero": self.converges_to_zero,
        }


@lru_cache(maxsize=None)
def classify(model: LogisticModel) -> BoundaryReport:
    """Full boundary report for the model (canonical reference x0 = 1)."""
    psi, c = model.psi, model.c
    two_l = 2.0 * psi.lam / c
    e = energy(model)
    grey, dynkin = grey_dynkin(model)

    if two_l >= 1.0:
        z_inf, u0, v0 = (BoundaryKind.EXIT, BoundaryKind.ENTRANCE,
                         BoundaryKind.EXIT)
    elif math.isfinite(e):
        z_inf, u0, v0 = (BoundaryKind.REGULAR_REFLECTING,
                         BoundaryKind.REGULAR_ABSORBING,
                         BoundaryKind.REGULAR_REFLECTING)
    else:
        z_inf, u0, v0 = (BoundaryKind.ENTRANCE, BoundaryKind.EXIT,
                         BoundaryKind.ENTRANCE)

    if grey:
        z0, u_inf, v_inf = (BoundaryKind.EXIT, BoundaryKind.ENTRANCE,
                            BoundaryKind.EXIT)
    else:
        z0, u_inf, v_inf = (BoundaryKind.NATURAL, BoundaryKind.NATURAL,
                            BoundaryKind.NATURAL)

    prof = psi.profile()
    probes = np.geomspace(2.0 ** -20, 2.0 ** 20, 41)
    converges = math.isfinite(prof.rho) or bool(
        np.max(psi.evaluate(probes)) >= 0.0)

    return BoundaryReport(
        model=model,
        energy=e,
        two_lambda_over_c=two_l,
        grey=grey,
        dynkin=dynkin,
        z_zero=z0,
        z_infty=z_inf,
        u_zero=u0,
        u_infty=u_inf,
        v_zero=v0,
        v_infty=v_inf,
        s_z_zero=s_z_zero(model),
        converges_to_zero=converges,
    )
