"""Branching mechanisms and their shape diagnostics.

A mechanism is the quadruple (lam, sigma, gamma, pi) behind

    Psi(x) = -lam + (sigma^2/2) x^2 + gamma x
             + int_0^inf (e^{-xh} - 1 + xh 1_{h<=1}) pi(dh),

with the jump measure pi supported on (0, inf) and int (1 ^ h^2) pi < inf.
Psi is convex, Psi(0) = -lam, and x -> Psi(x)/x is nondecreasing.

Each Lévy-measure variant exposes the compensated exponential integral both
in closed form (when one exists) and through adaptive quadrature of the
density, so downstream checks can compare two genuinely independent routes.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

from .errors import DomainError
from .quadrature import improper_lower, improper_upper, quad_log

__all__ = [
    "BranchingMechanism",
    "CompoundPoisson",
    "ExponentialJumps",
    "FixedJumps",
    "LevyMeasure",
    "LogisticModel",
    "MechanismProfile",
    "StableTail",
    "TabulatedDensity",
    "ZeroMeasure",
    "constant_mechanism",
    "drift_mechanism",
    "half_stable_mechanism",
    "quadratic_mechanism",
    "stable_mechanism",
    "stable_tail_constant",
]

_PROBE_EXP = 60  # root/limit probes cover x in [2^-60, 2^60]


def stable_tail_constant(alpha: float) -> float:
    """Normalizing constant making scale*c_alpha*h^{-1-alpha} integrate to x^alpha."""
    return alpha * (alpha - 1.0) / gamma_fn(2.0 - alpha)


def _compensated_term(x: float, h: np.ndarray) -> np.ndarray:
    """e^{-xh} - 1 + xh 1_{h<=1}, evaluated stably for small xh."""
    xh = x * h
    out = np.expm1(-xh)
    return np.where(h <= 1.0, out + xh, out)


class LevyMeasure(ABC):
    """Jump measure on (0, inf) with int (1 ^ h^2) pi(dh) < inf."""

    @abstractmethod
    def compensated(self, x: np.ndarray) -> np.ndarray:
        """int (e^{-xh} - 1 + xh 1_{h<=1}) pi(dh) for x >= 0 (vectorized)."""

    @abstractmethod
    def compensated_quad(self, x: float) -> float:
        """Same integral by adaptive quadrature (independent of closed forms)."""

    @abstractmethod
    def mass_between(self, a: float, b: float) -> float:
        """pi((a, b]); may be inf when a = 0."""

    @abstractmethod
    def mean_between(self, a: float, b: float) -> float:
        """int_a^b h pi(dh); may be inf at an improper end."""

    @abstractmethod
    def small_jump_var(self, eps: float) -> float:
        """int_0^eps h^2 pi(dh) (always finite)."""

    @abstractmethod
    def sample_between(self, rng: np.random.Generator, size: int,
                       a: float, b: float) -> np.ndarray:
        """Draw jump sizes conditioned on (a, b]; requires mass_between > 0."""

    def total_mass(self) -> float:
        return self.mass_between(0.0, math.inf)

    def mean_below_one(self) -> float:
        return self.mean_between(0.0, 1.0)

    def mean_above_one(self) -> float:
        return self.mean_between(1.0, math.inf)


@dataclass(frozen=True)
class ZeroMeasure(LevyMeasure):
    """No jumps."""

    def compensated(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def compensated_quad(self, x):
        return 0.0

    def mass_between(self, a, b):
        return 0.0

    def mean_between(self, a, b):
        return 0.0

    def small_jump_var(self, eps):
        return 0.0

    def sample_between(self, rng, size, a, b):
        raise DomainError("zero measure has no jumps to sample")


def _density_compensated_quad(density, x: float) -> float:
    """Adaptive quadrature of the compensated integrand against a density.

    Split at h = 1 to match the compensation cut; the (0, eps) head is
    scanned in dyadic shells because the integrand can be improper there.
    """
    if x == 0.0:
        return 0.0

    def small(h: float) -> float:
        return (math.expm1(-x * h) + x * h) * density(h)

    def big(h: float) -> float:
        return math.expm1(-x * h) * density(h)

    eps = min(1.0, 1e-4 / x) if x > 1.0 else 1e-4
    head = improper_lower(small, eps).require("compensated jump integral near 0")
    mid = quad_log(small, eps, 1.0) if eps < 1.0 else 0.0
    # above the crossover h ~ 1/x the integrand saturates to -density; the
    # dyadic scan must start there or growing pre-crossover shells look
    # divergent
    cross = max(1.0, 1.0 / x)
    mid2 = quad_log(big, 1.0, cross) if cross > 1.0 else 0.0
    tail = improper_upper(big, cross)
    if not tail.finite:
        raise DomainError("large-jump integral failed to converge")
    return head + mid + mid2 + tail.value


@dataclass(frozen=True)
class StableTail(LevyMeasure):
    """Density scale * c_alpha * h^{-1-alpha} with alpha in (1, 2).

    The fully compensated integral of this density is exactly scale * x^alpha;
    cutting the compensation at h = 1 shifts it by a linear term.
    """

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0):
            raise DomainError(f"StableTail needs alpha in (1,2), got {self.alpha}")
        if self.scale <= 0.0:
            raise DomainError("StableTail needs scale > 0")

    @property
    def c_alpha(self) -> float:
        return stable_tail_constant(self.alpha)

    def density(self, h):
        h = np.asarray(h, dtype=float)
        return self.scale * self.c_alpha * h ** (-1.0 - self.alpha)

    def compensated(self, x):
        x = np.asarray(x, dtype=float)
        a = self.alpha
        return self.scale * (x ** a - x * self.c_alpha / (a - 1.0))

    def compensated_quad(self, x):
        return _density_compensated_quad(lambda h: float(self.density(h)), x)

    def mass_between(self, a, b):
        lo = math.inf if a == 0.0 else a ** -self.alpha
        hi = 0.0 if math.isinf(b) else b ** -self.alpha
        return self.scale * self.c_alpha * (lo - hi) / self.alpha

    def mean_between(self, a, b):
        p = 1.0 - self.alpha
        lo = math.inf if a == 0.0 else a ** p
        hi = 0.0 if math.isinf(b) else b ** p
        return self.scale * self.c_alpha * (lo - hi) / (self.alpha - 1.0)

    def small_jump_var(self, eps):
        return self.scale * self.c_alpha * eps ** (2.0 - self.alpha) / (2.0 - self.alpha)

    def sample_between(self, rng, size, a, b):
        if a <= 0.0:
            raise DomainError("stable jumps can only be sampled above a > 0")
        u = rng.random(size)
        betab = 0.0 if math.isinf(b) else (a / b) ** self.alpha
        return a * (1.0 - u * (1.0 - betab)) ** (-1.0 / self.alpha)


@dataclass(frozen=True)
class ExponentialJumps:
    """Exponential jump law with the given mean."""

    mean: float

    def __post_init__(self):
        if self.mean <= 0.0:
            raise DomainError("exponential jump law needs mean > 0")


@dataclass(frozen=True)
class FixedJumps:
    """Deterministic jumps of the given size."""

    size: float

    def __post_init__(self):
        if self.size <= 0.0:
            raise DomainError("fixed jump law needs size > 0")


JumpLaw = Union[ExponentialJumps, FixedJumps]


@dataclass(frozen=True)
class CompoundPoisson(LevyMeasure):
    """Finite-activity measure pi = rate * law."""

    rate: float
    law: JumpLaw

    def __post_init__(self):
        if self.rate <= 0.0:
            raise DomainError("CompoundPoisson needs rate > 0")
        if not isinstance(self.law, (ExponentialJumps, FixedJumps)):
            raise DomainError("unsupported jump law descriptor")

    def compensated(self, x):
        x = np.asarray(x, dtype=float)
        if isinstance(self.law, FixedJumps):
            a = self.law.size
            comp = x * a if a <= 1.0 else 0.0
            return self.rate * (np.expm1(-x * a) + comp)
        m = self.law.mean
        # E e^{-xJ} = 1/(1+mx); E[J 1_{J<=1}] = m - (1+m)e^{-1/m}
        trunc_mean = m - (1.0 + m) * math.exp(-1.0 / m)
        return self.rate * (1.0 / (1.0 + m * x) - 1.0 + x * trunc_mean)

    def compensated_quad(self, x):
        if isinstance(self.law, FixedJumps):
            a = self.law.size
            comp = x * a if a <= 1.0 else 0.0
            return self.rate * (math.expm1(-x * a) + comp)
        m = self.law.mean

        def density(h):
            return self.rate * math.exp(-h / m) / m

        return _density_compensated_quad(density, x)

    def mass_between(self, a, b):
        if isinstance(self.law, FixedJumps):
            return self.rate if a < self.law.size <= b else 0.0
        m = self.law.mean
        hi = 0.0 if math.isinf(b) else math.exp(-b / m)
        return self.rate * (math.exp(-a / m) - hi)

    def mean_between(self, a, b):
        if isinstance(self.law, FixedJumps):
            s = self.law.size
            return self.rate * s if a < s <= b else 0.0
        m = self.law.mean
        hi = 0.0 if math.isinf(b) else (b + m) * math.exp(-b / m)
        return self.rate * ((a + m) * math.exp(-a / m) - hi)

    def small_jump_var(self, eps):
        if isinstance(self.law, FixedJumps):
            s = self.law.size
            return self.rate * s * s if s <= eps else 0.0
        m = self.law.mean
        e = math.exp(-eps / m)
        return self.rate * (2.0 * m * m - e * (eps * eps + 2.0 * m * eps + 2.0 * m * m))

    def sample_between(self, rng, size, a, b):
        if isinstance(self.law, FixedJumps):
            return np.full(size, self.law.size)
        m = self.law.mean
        u = rng.random(size)
        if math.isinf(b):
            return a - m * np.log1p(-u)
        cap = -math.expm1(-(b - a) / m)
        return a - m * np.log1p(-u * cap)


@dataclass(frozen=True)
class TabulatedDensity(LevyMeasure):
    """Density given on a grid of (h, value) pairs, log-log interpolated.

    Below the first node and above the last the density continues as a power
    law; the tail exponent is declared by the caller, the head exponent is
    the slope of the first grid segment.
    """

    nodes: tuple[float, ...]
    values: tuple[float, ...]
    tail_exponent: float

    def __post_init__(self):
        h = np.asarray(self.nodes, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if h.ndim != 1 or h.size < 2 or v.shape != h.shape:
            raise DomainError("TabulatedDensity needs matching grids of length >= 2")
        if not (np.all(h > 0.0) and np.all(np.diff(h) > 0.0)):
            raise DomainError("TabulatedDensity nodes must be positive increasing")
        if not np.all(v > 0.0):
            raise DomainError("TabulatedDensity values must be positive")
        if self.tail_exponent >= -1.0:
            raise DomainError("tail exponent must be < -1 for a finite tail mass")
        if self._head_exponent <= -3.0:
            raise DomainError("head slope must be > -3 for int h^2 pi < inf")

    @cached_property
    def _h(self) -> np.ndarray:
        return np.asarray(self.nodes, dtype=float)

    @cached_property
    def _v(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @cached_property
    def _head_exponent(self) -> float:
        h, v = np.asarray(self.nodes[:2], float), np.asarray(self.values[:2], float)
        return float(math.log(v[1] / v[0]) / math.log(h[1] / h[0]))

    @cached_property
    def _segments(self) -> list[tuple[float, float, float, float]]:
        """(h_lo, h_hi, value_at_lo, local exponent), covering (0, inf)."""
        h, v = self._h, self._v
        segs = [(0.0, float(h[0]), float(v[0]), self._head_exponent)]
        for i in range(h.size - 1):
            p = math.log(v[i + 1] / v[i]) / math.log(h[i + 1] / h[i])
            segs.append((float(h[i]), float(h[i + 1]), float(v[i]), p))
        segs.append((float(h[-1]), math.inf, float(v[-1]), self.tail_exponent))
        return segs

    def density(self, h):
        h = np.asarray(h, dtype=float)
        logh = np.log(np.clip(h, 1e-300, None))
        lh, lv = np.log(self._h), np.log(self._v)
        out = np.interp(logh, lh, lv)
        head = logh < lh[0]
        tail = logh > lh[-1]
        out = np.where(head, lv[0] + self._head_exponent * (logh - lh[0]), out)
        out = np.where(tail, lv[-1] + self.tail_exponent * (logh - lh[-1]), out)
        return np.exp(out)

    def _moment(self, k: float, a: float, b: float) -> float:
        """int_a^b h^k density(h) dh using per-segment power closed forms."""
        total = 0.0
        for lo, hi, v0, p in self._segments:
            s0, s1 = max(a, lo), min(b, hi)
            if s0 >= s1:
                continue
            # density on this segment is v0*(h/href)^p, anchored at the grid
            # node side (right end for the head segment, left end otherwise)
            href = hi if lo == 0.0 else lo
            q = p + k + 1.0
            coef = v0 * href ** -p
            if s0 == 0.0:
                if q <= 0.0:
                    return math.inf
                lo_term = 0.0
            else:
                lo_term = s0 ** q if abs(q) > 1e-12 else math.log(s0)
            if math.isinf(s1):
                if q >= 0.0:
                    return math.inf
                hi_term = 0.0
            else:
                hi_term = s1 ** q if abs(q) > 1e-12 else math.log(s1)
            if abs(q) > 1e-12:
                total += coef * (hi_term - lo_term) / q
            else:
                total += coef * (hi_term - lo_term)
        return total

    def compensated(self, x):
        arr = np.asarray(x, dtype=float)
        flat = np.ravel(arr)
        out = np.array([self.compensated_quad(float(t)) for t in flat])
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    def compensated_quad(self, x):
        return _density_compensated_quad(lambda h: float(self.density(h)), x)

    def mass_between(self, a, b):
        return self._moment(0.0, a, b)

    def mean_between(self, a, b):
        return self._moment(1.0, a, b)

    def small_jump_var(self, eps):
        return self._moment(2.0, 0.0, eps)

    def sample_between(self, rng, size, a, b):
        if a <= 0.0:
            raise DomainError("tabulated jumps can only be sampled above a > 0")
        pieces = []
        for lo, hi, v0, p in self._segments:
            s0, s1 = max(a, lo), min(b, hi)
            if s0 >= s1:
                continue
            m = self._moment(0.0, s0, s1)
            if m > 0.0:
                pieces.append((s0, s1, p, m))
        if not pieces:
            raise DomainError("no jump mass in the requested band")
        w = np.array([m for *_, m in pieces])
        idx = rng.choice(len(pieces), size=size, p=w / w.sum())
        out = np.empty(size)
        u = rng.random(size)
        for j, (s0, s1, p, _) in enumerate(pieces):
            sel = idx == j
            if not np.any(sel):
                continue
            q = p + 1.0
            if abs(q) > 1e-12:
                t1 = 0.0 if math.isinf(s1) else s1 ** q
                out[sel] = (s0 ** q + u[sel] * (t1 - s0 ** q)) ** (1.0 / q)
            else:
                out[sel] = s0 * (s1 / s0) ** u[sel]
        return out


@dataclass(frozen=True)
class MechanismProfile:
    """Shape summary: largest root, linear drift at infinity, slope at zero."""

    rho: float
    delta: float
    subordinator_exponent: bool
    prime_at_zero: float


@dataclass(frozen=True)
class BranchingMechanism:
    """Immutable (lam, sigma, gamma, levy) quadruple defining Psi."""

    lam: float = 0.0
    sigma: float = 0.0
    gamma: float = 0.0
    levy: LevyMeasure = ZeroMeasure()

    def __post_init__(self):
        if self.lam < 0.0:
            raise DomainError("killing mass lam must be >= 0")
        if self.sigma < 0.0:
            raise DomainError("sigma must be >= 0")
        if not math.isfinite(self.gamma):
            raise DomainError("gamma must be finite")
        if not isinstance(self.levy, LevyMeasure):
            raise DomainError("levy must be a LevyMeasure variant")

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x):
        """Psi(x) for x >= 0, scalar or array."""
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0.0):
            raise DomainError("Psi is defined for x >= 0")
        val = (-self.lam + 0.5 * self.sigma ** 2 * arr ** 2 + self.gamma * arr
               + self.levy.compensated(arr))
        return float(val) if arr.ndim == 0 else val

    def evaluate_quad(self, x: float) -> float:
        """Psi(x) with the jump integral done by quadrature (scalar)."""
        if x < 0.0:
            raise DomainError("Psi is defined for x >= 0")
        return (-self.lam + 0.5 * self.sigma ** 2 * x ** 2 + self.gamma * x
                + self.levy.compensated_quad(x))

    def derivative(self, x):
        """Psi'(x) for x > 0 by compensated-integrand differentiation."""
        arr = np.asarray(x, dtype=float)
        out = self.sigma ** 2 * arr + self.gamma + _jump_derivative(self.levy, arr)
        return float(out) if arr.ndim == 0 else out

    def profile(self) -> MechanismProfile:
        return _profile(self)


def _jump_derivative(levy: LevyMeasure, x: np.ndarray) -> np.ndarray:
    """d/dx of the compensated jump integral: int (h 1_{h<=1} - h e^{-xh}) pi."""
    if isinstance(levy, ZeroMeasure):
        return np.zeros_like(x)
    if isinstance(levy, StableTail):
        a = levy.alpha
        return levy.scale * (a * np.asarray(x) ** (a - 1.0)
                             - levy.c_alpha / (a - 1.0))
    if isinstance(levy, CompoundPoisson) and isinstance(levy.law, FixedJumps):
        s = levy.law.size
        comp = s if s <= 1.0 else 0.0
        return levy.rate * (comp - s * np.exp(-np.asarray(x) * s))
    if isinstance(levy, CompoundPoisson):
        m = levy.law.mean
        trunc_mean = m - (1.0 + m) * math.exp(-1.0 / m)
        return levy.rate * (trunc_mean - m / (1.0 + m * np.asarray(x)) ** 2)
    # tabulated: central differences of the quadrature route
    arr = np.asarray(x, dtype=float)
    flat = np.ravel(arr)
    out = np.empty(flat.shape)
    for i, t in enumerate(flat):
        dh = max(1e-6, 1e-6 * abs(t))
        lo = max(t - dh, 0.0)
        out[i] = (levy.compensated_quad(t + dh) - levy.compensated_quad(lo)) / (t + dh - lo)
    return out.reshape(arr.shape)


@lru_cache(maxsize=None)
def _profile(psi: BranchingMechanism) -> MechanismProfile:
    rho = _largest_root(psi)
    mean_small = psi.levy.mean_below_one()
    if psi.sigma > 0.0 or math.isinf(mean_small):
        delta = -math.inf
    else:
        delta = -(psi.gamma + mean_small) + 0.0
    mean_big = psi.levy.mean_above_one()
    prime = -math.inf if math.isinf(mean_big) else psi.gamma - mean_big
    return MechanismProfile(
        rho=rho,
        delta=delta,
        subordinator_exponent=math.isinf(rho),
        prime_at_zero=prime,
    )


def _largest_root(psi: BranchingMechanism) -> float:
    """sup{x > 0 : Psi(x) <= 0}, with 0 for Psi > 0 on (0,inf) and inf if
    Psi never turns positive on the probe range."""
    probes = [2.0 ** k for k in range(-_PROBE_EXP, _PROBE_EXP + 1)]
    vals = [psi.evaluate(p) for p in probes]
    first_pos = next((i for i, v in enumerate(vals) if v > 0.0), None)
    if first_pos is None:
        return math.inf
    if first_pos == 0:
        # positive already at 2^-60: root only if the killing mass pins
        # Psi(0) = -lam < 0 strictly below zero
        if psi.lam > 0.0:
            return brentq(psi.evaluate, 0.0, probes[0], rtol=1e-15)
        return 0.0
    return brentq(psi.evaluate, probes[first_pos - 1], probes[first_pos],
                  rtol=1e-14)


@dataclass(frozen=True)
class LogisticModel:
    """Branching mechanism paired with the quadratic competition rate c."""

    psi: BranchingMechanism
    c: float

    def __post_init__(self):
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise DomainError("competition parameter c must be in (0, inf)")


def constant_mechanism(lam: float) -> BranchingMechanism:
    """Psi = -lam."""
    return BranchingMechanism(lam=lam)


def quadratic_mechanism(coef: float = 1.0, lam: float = 0.0,
                        gamma: float = 0.0) -> BranchingMechanism:
    """Psi(x) = -lam + coef*x^2 + gamma*x."""
    return BranchingMechanism(lam=lam, sigma=math.sqrt(2.0 * coef), gamma=gamma)


def drift_mechanism(gamma: float, lam: float = 0.0) -> BranchingMechanism:
    """Psi(x) = -lam + gamma*x."""
    return BranchingMechanism(lam=lam, gamma=gamma)


def stable_mechanism(alpha: float, scale: float = 1.0,
                     lam: float = 0.0) -> BranchingMechanism:
    """Psi(x) = -lam + scale*x^alpha, alpha in (1,2).

    The linear part of the cut-compensated stable integral is cancelled by
    the gamma coefficient so the closed form is exact.
    """
    tail = StableTail(alpha=alpha, scale=scale)
    gamma = scale * tail.c_alpha / (alpha - 1.0)
    return BranchingMechanism(lam=lam, gamma=gamma, levy=tail)


def half_stable_mechanism(scale: float = 1.0, lam: float = 0.0,
                          n_nodes: int = 161) -> BranchingMechanism:
    """Psi(x) = -lam - scale*sqrt(x) via a tabulated h^{-3/2} jump density.

    int (e^{-xh}-1) h^{-3/2}/(2 sqrt pi) dh = -sqrt(x); the cut compensation
    adds x/sqrt(pi), cancelled here by the gamma coefficient.  Accuracy is
    limited by the grid truncation, roughly 1e-6 relative on [0.01, 100].
    """
    hs = np.geomspace(1e-10, 1e10, n_nodes)
    vals = scale * hs ** -1.5 / (2.0 * math.sqrt(math.pi))
    levy = TabulatedDensity(tuple(hs), tuple(vals), tail_exponent=-1.5)
    return BranchingMechanism(lam=lam, gamma=-scale / math.sqrt(math.pi),
                              levy=levy)
