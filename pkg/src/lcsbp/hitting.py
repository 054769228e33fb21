"""Eigenfunctions of the competitive generator and the laws built on them.

The generator (c/2)x h'' + (c/2 + Psi(x)) h' acts on functions of the dual
diffusion scale; its theta-eigenfunctions come in an increasing and a
decreasing branch whose ratios give the Laplace transforms of extinction
and explosion times.  Everything here stays in log space: the increasing
branch is integrated as (log h, d log h/d log x); the decreasing branch is
integrated with the factor e^{-Q} removed, since its raw log-slope reaches
-2 Psi(x)/c (about -1e12 at the top of the grid for quadratic mechanisms)
where a float64 residual check would be meaningless.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .boundary import BoundaryKind, classify, q_function
from .errors import (
    DomainError,
    Indeterminate,
    PreconditionViolation,
    StiffnessFailure,
)
from .mechanism import LogisticModel
from .quadrature import (
    Verdict,
    improper_lower,
    improper_upper,
    quad_interval,
)

__all__ = [
    "EigenSolution",
    "SZFunction",
    "X_MAX",
    "X_MIN",
    "eigen_residual",
    "excursion_infimum_cdf",
    "excursion_occupation",
    "fractal_dimension",
    "laplace_explosion",
    "laplace_extinction",
    "local_time_exponent_zero",
    "mean_extinction",
    "n_zeta_mean",
    "s_z_function",
    "solve_eigen",
]

X_MIN = 1e-8
X_MAX = 1e6
NODES_PER_DECADE = 400
_MARGIN = 0.5  # log-x headroom before the grid so init transients die out
_EXP_CAP = 700.0


def _exp(v: float) -> float:
    return math.exp(min(v, _EXP_CAP))


def _grid() -> np.ndarray:
    decades = int(round(math.log10(X_MAX / X_MIN)))
    return np.geomspace(X_MIN, X_MAX, NODES_PER_DECADE * decades + 1)


@dataclass(frozen=True)
class EigenSolution:
    """Both theta-eigenfunctions on a shared log grid.

    log_h_plus is gauged so h_plus(0) = 1 when 0 carries the regular
    branch (2 lam/c < 1); in the entrance/exit regime the gauge is the
    integration start and h_plus vanishes at 0.  log_h_minus is gauged so
    h_minus = 1 at the top of the (margin-extended) grid.  The slope
    arrays hold d log h / d log x, which stay meaningful where the linear
    values would over- or underflow.

    Each branch is integrated in two legs split at the seam index (the
    node nearest x = 1): below it a high-order sweep in a variable that
    vanishes with x, above it a stiff sweep in a variable kept O(1) by
    shifting off the dominant slope (-2 Psi/c where Psi grows).  phi_plus
    and phi_minus hold the shifted slope + 2 Psi/c; where a leg solved
    the shifted variable natively, the plain slope array is derived and
    loses relative precision there (by design: the residual check reads
    each zone in its native variable).
    """

    theta: float
    grid: np.ndarray
    log_h_plus: np.ndarray
    slope_plus: np.ndarray
    log_h_minus: np.ndarray
    slope_minus: np.ndarray
    phi_minus: np.ndarray
    log_h_plus_at_infty: float
    log_h_minus_at_zero: float
    regular_at_zero: bool
    seam: int
    minus_top_phi: bool
    plus_top_phi: bool
    phi_plus: np.ndarray | None
    chi_plus: np.ndarray | None

    @property
    def h_plus(self) -> np.ndarray:
        return np.exp(self.log_h_plus - self.log_h_plus[-1])

    @property
    def h_minus(self) -> np.ndarray:
        return np.exp(self.log_h_minus - self.log_h_minus[0])

    @property
    def h_plus_at_infty(self) -> float:
        if math.isinf(self.log_h_plus_at_infty):
            return math.inf
        return math.exp(self.log_h_plus_at_infty - self.log_h_plus[-1])

    @property
    def h_minus_at_zero(self) -> float:
        if math.isinf(self.log_h_minus_at_zero):
            return math.inf
        return math.exp(self.log_h_minus_at_zero - self.log_h_minus[0])


_RTOL_STIFF = 1e-12
# upper-leg shifted slopes are O(1) yet may sit exactly at 0 (drift
# slope -1 with theta = 1), so they need an absolute floor
_ATOL_SLOPE = 1e-14
# log-value components are pure quadratures swept at rate 2|Psi|/c; a tight
# absolute floor there only crunches the first steps below eps*t
_ATOL_LOG = 1e-9


def _integrate(rhs, span, y0, t_eval, what: str, atol,
               jac=None) -> np.ndarray:
    # an analytic Jacobian marks the leg as stiff from the first step;
    # LSODA's non-stiff startup diverges when the fast rate exceeds ~1/h
    method = "Radau" if jac is not None else "LSODA"
    sol = solve_ivp(rhs, span, y0, method=method, t_eval=t_eval,
                    rtol=_RTOL_STIFF, atol=atol, jac=jac)
    if not sol.success:
        raise StiffnessFailure(f"{what}: {sol.message}")
    return sol.y


def _raw_rhs(psi, c: float, theta: float):
    def rhs(s: float, y) -> list:
        x = math.exp(s)
        p = y[1]
        return [p, (2.0 / c) * (theta * x - float(psi.evaluate(x)) * p) - p * p]

    def jac(s: float, y) -> list:
        p = float(psi.evaluate(math.exp(s)))
        return [[0.0, 1.0], [0.0, -2.0 * p / c - 2.0 * y[1]]]

    return rhs, jac


_RK_SUB = 4  # base substeps per grid interval; Richardson pairs it with 2x


def _rk4_chunk(xs: np.ndarray, ps: np.ndarray, c: float, theta: float,
               r: float, chi: bool, h: float, sub: int, L: float, w: float,
               out: tuple | None) -> tuple[float, float]:
    """Fixed-step RK4 over one uniform lattice of half-step Psi values.

    State is (log-value, slope-like variable w).  chi selects the
    indicial-shifted right side; r and lam enter only there.  out, when
    given, receives node values every sub steps.
    """
    two_c = 2.0 / c
    hh = 0.5 * h
    h6 = h / 6.0
    n = (len(xs) - 1) // 2
    if out is not None:
        out_L, out_w = out
    idx = 0
    for i in range(n):
        x0, pm0 = xs[idx], ps[idx]
        xm, pmm = xs[idx + 1], ps[idx + 1]
        x1, pm1 = xs[idx + 2], ps[idx + 2]
        if chi:
            k1 = (two_c * (theta * x0 - r * (pm0 + c * r / 2.0) - pm0 * w)
                  - 2.0 * r * w - w * w)
            w2 = w + hh * k1
            k2 = (two_c * (theta * xm - r * (pmm + c * r / 2.0) - pmm * w2)
                  - 2.0 * r * w2 - w2 * w2)
            w3 = w + hh * k2
            k3 = (two_c * (theta * xm - r * (pmm + c * r / 2.0) - pmm * w3)
                  - 2.0 * r * w3 - w3 * w3)
            w4 = w + h * k3
            k4 = (two_c * (theta * x1 - r * (pm1 + c * r / 2.0) - pm1 * w4)
                  - 2.0 * r * w4 - w4 * w4)
        else:
            k1 = two_c * (theta * x0 - pm0 * w) - w * w
            w2 = w + hh * k1
            k2 = two_c * (theta * xm - pmm * w2) - w2 * w2
            w3 = w + hh * k2
            k3 = two_c * (theta * xm - pmm * w3) - w3 * w3
            w4 = w + h * k3
            k4 = two_c * (theta * x1 - pm1 * w4) - w4 * w4
        L += h6 * (w + 2.0 * w2 + 2.0 * w3 + w4)
        w += h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        idx += 2
        if out is not None and (i + 1) % sub == 0:
            j = (i + 1) // sub
            out_L[j] = L
            out_w[j] = w
    return L, w


def _rk4_run(psi, c: float, theta: float, r: float, chi: bool,
             s_init: float, y_init: tuple[float, float],
             s_nodes: np.ndarray, sub: int) -> tuple[np.ndarray, np.ndarray]:
    L, w = y_init
    step = float(s_nodes[1] - s_nodes[0])
    # lead-in stint from the off-grid start to the first node
    lead = float(s_nodes[0] - s_init)
    if abs(lead) > 1e-12:
        n_lead = max(1, round(abs(lead / step)) * sub)
        lat = np.linspace(s_init, float(s_nodes[0]), 2 * n_lead + 1)
        xs = np.exp(lat)
        ps = np.asarray(psi.evaluate(xs), dtype=float)
        L, w = _rk4_chunk(xs, ps, c, theta, r, chi, lead / n_lead, sub,
                          L, w, None)
    n_int = len(s_nodes) - 1
    out_L = np.empty(n_int + 1)
    out_w = np.empty(n_int + 1)
    out_L[0], out_w[0] = L, w
    lat = np.linspace(float(s_nodes[0]), float(s_nodes[-1]),
                      2 * sub * n_int + 1)
    xs = np.exp(lat)
    ps = np.asarray(psi.evaluate(xs), dtype=float)
    _rk4_chunk(xs, ps, c, theta, r, chi, step / sub, sub, L, w,
               (out_L, out_w))
    return out_L, out_w


def _lower_leg(psi, c: float, theta: float, r: float, chi: bool,
               s_init: float, y_init: tuple[float, float],
               s_nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Richardson-paired RK4: smooth O(h^6) node error, no solver jitter.

    The residual check divides slope errors by x, so the leg below the
    seam needs absolute accuracy ~1e-14 at x = 1e-8; adaptive solvers
    leave ~30x their rtol there, while the extrapolated fixed-step pair
    lands near roundoff.
    """
    L1, w1 = _rk4_run(psi, c, theta, r, chi, s_init, y_init, s_nodes,
                      _RK_SUB)
    L2, w2 = _rk4_run(psi, c, theta, r, chi, s_init, y_init, s_nodes,
                      2 * _RK_SUB)
    return (16.0 * L2 - L1) / 15.0, (16.0 * w2 - w1) / 15.0


def _phi_rhs(psi, c: float, theta: float):
    # phi = slope + 2 Psi/c; first component integrates phi, so the log
    # value is recovered as A - (Q(x) - Q(x_ref)) with Q supplied per node
    # by _q_span -- co-integrating Q here would let the error control
    # commit absolute errors ~rtol*|Q| against the O(1) part of log h
    def rhs(s: float, y) -> list:
        x = math.exp(s)
        p = float(psi.evaluate(x))
        dp = float(psi.derivative(x))
        phi = y[1]
        return [phi,
                (2.0 / c) * (theta * x + p * phi + x * dp) - phi * phi]

    def jac(s: float, y) -> list:
        p = float(psi.evaluate(math.exp(s)))
        return [[0.0, 1.0], [0.0, 2.0 * p / c - 2.0 * y[1]]]

    return rhs, jac


# 4-point Gauss-Legendre abscissae/weights on [0, 1]
_GL_T = np.array([0.06943184420297371, 0.33000947820757187,
                  0.6699905217924281, 0.9305681557970263])
_GL_W = np.array([0.17392742256872693, 0.3260725774312731,
                  0.3260725774312731, 0.17392742256872693])


def _q_span(psi, c: float, s_nodes: np.ndarray) -> np.ndarray:
    """Cumulative int 2 Psi/c d(ln x) along s_nodes, zero at s_nodes[0].

    Per-interval Gauss quadrature keeps every partial sum accurate
    relative to its own magnitude, which cumulative trapezoids on the
    solver grid or an ODE co-integration would not.
    """
    a = s_nodes[:-1]
    h = np.diff(s_nodes)
    pts = a[:, None] + h[:, None] * _GL_T[None, :]
    vals = np.asarray(psi.evaluate(np.exp(pts.ravel())), dtype=float)
    segs = (vals.reshape(pts.shape) * _GL_W[None, :]).sum(axis=1) * h
    out = np.empty(len(s_nodes))
    out[0] = 0.0
    np.cumsum(segs, out=out[1:])
    return out * (2.0 / c)


def _seam_index(s_grid: np.ndarray) -> int:
    j = int(np.searchsorted(s_grid, 0.0))
    return min(max(j, 4), len(s_grid) - 5)


def _decaying_root(psi, c: float, theta: float, x: float,
                   gauge_phi: bool) -> tuple[float, float]:
    """Algebraic root the decreasing branch rides at large x.

    In the phi gauge the root balances the full right side including the
    x Psi' term (for Psi = x^2 the limit is -2, not 0); returns the root
    and the attraction rate 2*sqrt(disc) for the layer correction.
    """
    p = float(psi.evaluate(x))
    g = theta + (float(psi.derivative(x)) if gauge_phi else 0.0)
    disc = (p / c) ** 2 + 2.0 * g * x / c
    root = math.sqrt(max(disc, 0.0))
    rate = 2.0 * root
    if gauge_phi:
        if p >= 0.0 and p / c + root > 0.0:
            return -(2.0 * g * x / c) / (p / c + root), rate
        return p / c - root, rate
    if p <= 0.0 and root - p / c > 0.0:
        return -(2.0 * g * x / c) / (root - p / c), rate
    return -p / c - root, rate


def _slow_manifold_init(psi, c: float, theta: float, x: float,
                        gauge_phi: bool) -> float:
    """Root plus first-order drift correction; kills the entry layer.

    Starting exactly on the algebraic root leaves a transient the solver
    must resolve with steps below eps(t); the correction root'/rate
    shrinks it to the tolerance floor.
    """
    v0, rate = _decaying_root(psi, c, theta, x, gauge_phi)
    if rate <= 0.0:
        return v0
    h = 1e-4
    vp, _ = _decaying_root(psi, c, theta, x * math.exp(h), gauge_phi)
    vm, _ = _decaying_root(psi, c, theta, x * math.exp(-h), gauge_phi)
    return v0 + (vp - vm) / (2.0 * h) / rate


def _solve_plus(model: LogisticModel, theta: float, s_grid: np.ndarray,
                p_grid: np.ndarray, seam: int):
    psi, c = model.psi, model.c
    r = 2.0 * psi.lam / c
    regular = r < 1.0
    s0 = s_grid[0] - _MARGIN
    x0 = math.exp(s0)
    s_seam = float(s_grid[seam])
    bot_eval = s_grid[:seam + 1]

    if regular:
        # series h = 1 + a1 x + ... encodes the vanishing-flux condition
        a1 = theta / (0.5 * c - psi.lam)
        y0 = (math.log1p(a1 * x0), a1 * x0 / (1.0 + a1 * x0))
    else:
        gt = psi.profile().prime_at_zero
        b1 = 0.0 if not math.isfinite(gt) else (
            2.0 * (theta - gt * r) / (c * (r + 1.0)))
        y0 = (math.log1p(b1 * x0), b1 * x0 / (1.0 + b1 * x0))
    lb, wb = _lower_leg(psi, c, theta, r, not regular, s0, y0, bot_eval)
    chi_bot = None
    if regular:
        log_h_bot = lb
        slope_bot = wb
    else:
        chi_bot = wb
        log_h_bot = lb + r * bot_eval
        slope_bot = wb + r

    s_top_m = float(s_grid[-1])
    x_top = math.exp(s_top_m)
    p_top = float(psi.evaluate(x_top))
    top_phi = (p_top < 0.0 and
               -2.0 * p_top / c >
               100.0 * max(theta, math.sqrt(2.0 * theta * x_top / c)))
    top_eval = s_grid[seam:]
    l_seam = float(log_h_bot[-1])
    slope_seam = float(slope_bot[-1])
    phi_plus = None
    if top_phi:
        y0t = [l_seam, slope_seam + 2.0 * float(p_grid[seam]) / c]
        rhs_phi, jac_phi = _phi_rhs(psi, c, theta)
        yt = _integrate(rhs_phi, (s_seam, s_top_m), y0t,
                        top_eval,
                        what="increasing eigenfunction, upper leg",
                        atol=[_ATOL_LOG, _ATOL_SLOPE], jac=jac_phi)
        log_h_top = yt[0] - _q_span(psi, c, top_eval)
        phi_top = yt[1]
        slope_top = phi_top - 2.0 * p_grid[seam:] / c
        phi_plus = np.concatenate(
            [slope_bot[:-1] + 2.0 * p_grid[:seam] / c, phi_top])
    else:
        rhs_raw, jac_raw = _raw_rhs(psi, c, theta)
        yt = _integrate(rhs_raw, (s_seam, s_top_m),
                        [l_seam, slope_seam], top_eval,
                        what="increasing eigenfunction, upper leg",
                        atol=[_ATOL_LOG, _ATOL_SLOPE], jac=jac_raw)
        log_h_top = yt[0]
        slope_top = yt[1]

    log_h = np.concatenate([log_h_bot[:-1], log_h_top])
    slope = np.concatenate([slope_bot[:-1], slope_top])
    chi_plus = None
    if chi_bot is not None:
        chi_plus = np.concatenate([chi_bot[:-1], slope_top - r])
    return log_h, slope, regular, top_phi, phi_plus, chi_plus


def _solve_minus(model: LogisticModel, theta: float, s_grid: np.ndarray,
                 p_grid: np.ndarray, seam: int):
    """Backward sweep of the decreasing branch, stiff leg first.

    Where Psi grows positive the raw slope reaches -2 Psi/c (about -1e12
    at the top for quadratic mechanisms), so the upper leg integrates
    phi = slope + 2 Psi/c, which stays O(1); the lower leg switches back
    to the raw slope, which vanishes with x and keeps full relative
    precision where the residual needs it.
    """
    psi, c = model.psi, model.c
    s_top = float(s_grid[-1]) + _MARGIN
    x_top = math.exp(s_top)
    p_top = float(psi.evaluate(x_top))
    s_seam = float(s_grid[seam])
    top_eval = s_grid[seam:]
    top_phi = p_top > 0.0

    if top_phi:
        phi0 = _slow_manifold_init(psi, c, theta, x_top, gauge_phi=True)
        rhs_phi, jac_phi = _phi_rhs(psi, c, theta)
        yt = _integrate(rhs_phi, (s_top, s_seam),
                        [0.0, phi0], top_eval[::-1],
                        what="decreasing eigenfunction, upper leg",
                        atol=[_ATOL_LOG, _ATOL_SLOPE], jac=jac_phi)
        accum = yt[0][::-1].copy()
        # normalize at the seam: differences of the O(1) phi integral plus
        # a per-node Q keep every stored value accurate relative to itself
        log_h_top = (accum - accum[0]) - _q_span(psi, c, top_eval)
        phi_top = yt[1][::-1].copy()
        slope_top = phi_top - 2.0 * p_grid[seam:] / c
        psi_seam = float(phi_top[0]) - 2.0 * float(p_grid[seam]) / c
    else:
        psi0 = _slow_manifold_init(psi, c, theta, x_top, gauge_phi=False)
        rhs_raw, jac_raw = _raw_rhs(psi, c, theta)
        yt = _integrate(rhs_raw, (s_top, s_seam),
                        [0.0, psi0], top_eval[::-1],
                        what="decreasing eigenfunction, upper leg",
                        atol=[_ATOL_LOG, _ATOL_SLOPE], jac=jac_raw)
        log_h_top = yt[0][::-1].copy()
        slope_top = yt[1][::-1].copy()
        phi_top = slope_top + 2.0 * p_grid[seam:] / c
        psi_seam = float(slope_top[0])

    bot_eval = s_grid[:seam + 1]
    lb, wb = _lower_leg(psi, c, theta, 0.0, False, s_seam,
                        (float(log_h_top[0]), psi_seam), bot_eval[::-1])
    log_h_bot = lb[::-1].copy()
    slope_bot = wb[::-1].copy()

    log_h = np.concatenate([log_h_bot[:-1], log_h_top])
    slope = np.concatenate([slope_bot[:-1], slope_top])
    phi = np.concatenate([slope_bot[:-1] + 2.0 * p_grid[:seam] / c, phi_top])
    return log_h, slope, phi, top_phi


def _extrapolate_to_zero(grid: np.ndarray, log_h: np.ndarray,
                         r: float) -> float:
    """log h(0+) from a two-point h = h0 + A x^p fit near the grid bottom."""
    if r <= 0.0:
        return math.inf  # the log branch dominates and h(0+) diverges
    p = min(1.0, r)
    j = int(round(NODES_PER_DECADE * math.log10(2.0)))
    rel = math.exp(log_h[j] - log_h[0])
    a = (rel - 1.0) / (grid[j] ** p - grid[0] ** p)
    h0 = 1.0 - a * grid[0] ** p
    return log_h[0] + math.log(h0)


@lru_cache(maxsize=64)
def solve_eigen(model: LogisticModel, theta: float) -> EigenSolution:
    """Increasing and decreasing theta-eigenfunctions of the generator."""
    if not (theta > 0.0 and math.isfinite(theta)):
        raise DomainError("theta must be in (0, inf)")
    report = classify(model)
    psi, c = model.psi, model.c
    grid = _grid()
    s_grid = np.log(grid)
    p_grid = np.asarray(psi.evaluate(grid), dtype=float)
    seam = _seam_index(s_grid)

    log_hp, slope_p, regular, plus_top_phi, phi_p, chi_p = _solve_plus(
        model, theta, s_grid, p_grid, seam)
    log_hm, slope_m, phi_m, minus_top_phi = _solve_minus(
        model, theta, s_grid, p_grid, seam)

    if report.grey:
        if float(psi.evaluate(X_MAX)) <= 0.0:
            raise DomainError(
                "mechanism is not positive at the top of the grid; the "
                "theta-problem falls outside the classified regime")
        tail = improper_upper(lambda u: 1.0 / float(psi.evaluate(u)), X_MAX)
        tail.require("tail integral of 1/Psi")
        log_hp_inf = float(log_hp[-1]) + theta * tail.value
    else:
        log_hp_inf = math.inf

    r = 2.0 * psi.lam / c
    log_hm_zero = _extrapolate_to_zero(grid, log_hm, r)

    return EigenSolution(
        theta=theta,
        grid=grid,
        log_h_plus=log_hp,
        slope_plus=slope_p,
        log_h_minus=log_hm,
        slope_minus=slope_m,
        phi_minus=phi_m,
        log_h_plus_at_infty=log_hp_inf,
        log_h_minus_at_zero=log_hm_zero,
        regular_at_zero=regular,
        seam=seam,
        minus_top_phi=minus_top_phi,
        plus_top_phi=plus_top_phi,
        phi_plus=phi_p,
        chi_plus=chi_p,
    )


# stride 2 balances roundoff jitter (down with wider stencils) against
# x^{r-1}-growing truncation of sqrt-like slopes near the grid bottom
_FD_STRIDE = 2


def _dlog(values: np.ndarray, step: float) -> np.ndarray:
    """Fourth-order interior derivative on a uniform grid (ends truncated)."""
    v, k = values, _FD_STRIDE
    return ((-v[4 * k:] + 8.0 * v[3 * k:-k] - 8.0 * v[k:-3 * k] + v[:-4 * k])
            / (12.0 * k * step))


def eigen_residual(model: LogisticModel, solution: EigenSolution) -> float:
    """Worst relative defect |G h - theta h| / (theta |h|) over both branches.

    Each grid zone is checked in the variable its leg actually solved:
    the raw slope where it vanishes with x, the + 2 Psi/c shift where the
    O(Psi^2/x) contributions must cancel algebraically, and the slope - r
    shift where the indicial x^r factor would otherwise swamp theta.  A
    fourth-order finite difference supplies the independent derivative.
    """
    psi, c = model.psi, model.c
    theta = solution.theta
    x = solution.grid
    s_step = math.log(x[1] / x[0])
    p_vals = np.asarray(psi.evaluate(x), dtype=float)
    dp_vals = np.asarray(psi.derivative(x), dtype=float)
    inner = slice(2 * _FD_STRIDE, -2 * _FD_STRIDE)
    xi = x[inner]
    pi_ = p_vals[inner]
    dpi = dp_vals[inner]
    top = np.arange(len(x))[inner] > solution.seam

    def raw_res(sl: np.ndarray) -> np.ndarray:
        sl_s = _dlog(sl, s_step)
        return (0.5 * c * (sl[inner] ** 2 + sl_s - sl[inner]) / xi
                + (0.5 * c + pi_) * sl[inner] / xi - theta)

    def phi_res(ph: np.ndarray) -> np.ndarray:
        ph_s = _dlog(ph, s_step)
        return (-pi_ * ph[inner] / xi
                + 0.5 * c * (ph[inner] ** 2 + ph_s) / xi - dpi - theta)

    def chi_res(ch_full: np.ndarray, r: float) -> np.ndarray:
        ch = ch_full[inner]
        ch_s = _dlog(ch_full, s_step)
        return (r * (pi_ + psi.lam) / xi
                + 0.5 * c * (2.0 * r * ch + ch ** 2 + ch_s - ch) / xi
                + (0.5 * c + pi_) * ch / xi - theta)

    if solution.regular_at_zero:
        res_p_bot = raw_res(solution.slope_plus)
    else:
        res_p_bot = chi_res(solution.chi_plus, 2.0 * psi.lam / c)
    if solution.plus_top_phi:
        res_p_top = phi_res(solution.phi_plus)
    else:
        res_p_top = raw_res(solution.slope_plus)
    res_p = np.where(top, res_p_top, res_p_bot)

    res_m_bot = raw_res(solution.slope_minus)
    if solution.minus_top_phi:
        res_m_top = phi_res(solution.phi_minus)
    else:
        res_m_top = res_m_bot
    res_m = np.where(top, res_m_top, res_m_bot)

    worst = max(float(np.max(np.abs(res_p))), float(np.max(np.abs(res_m))))
    return worst / theta


def _log_ratio_spline(s_grid: np.ndarray, log_h: np.ndarray,
                      anchor: float) -> CubicSpline:
    return CubicSpline(s_grid, log_h - anchor)


def laplace_extinction(model: LogisticModel, z: float, theta: float,
                       solution: EigenSolution | None = None) -> float:
    """E[e^{-theta * extinction time}] started from mass z (z = inf allowed)."""
    report = classify(model)
    if not report.grey:
        raise PreconditionViolation(
            "extinction-time transform needs a finite upper integral of "
            "1/Psi; the boundary report says it diverges")
    if not z > 0.0:
        raise DomainError("z must be in (0, inf]")
    sol = solution if solution is not None else solve_eigen(model, theta)
    if sol.theta != theta:
        raise DomainError("solution was built for a different theta")
    l_inf = sol.log_h_plus_at_infty

    if math.isinf(z):
        # exponential weight collapses onto 0
        return _exp(-l_inf) if sol.regular_at_zero else 0.0

    s_grid = np.log(sol.grid)
    spline = _log_ratio_spline(s_grid, sol.log_h_plus, l_inf)
    s_lo, s_hi = float(s_grid[0]), float(s_grid[-1])

    def f(x: float) -> float:
        if x <= 0.0:
            return 0.0
        s = min(max(math.log(x), s_lo), s_hi)
        return z * math.exp(-z * x + min(float(spline(s)), 0.0))

    cap = min(X_MAX, 60.0 / z)
    value = quad_interval(f, 0.0, cap, rtol=1e-10, atol=1e-14)
    if cap >= X_MAX:
        top = math.exp(min(float(spline(s_hi)), 0.0))
        value += math.exp(-z * X_MAX) * 0.5 * (1.0 + top)
    return min(1.0, max(0.0, value))


def laplace_explosion(model: LogisticModel, z: float, theta: float,
                      solution: EigenSolution | None = None) -> float:
    """E[e^{-theta * explosion time}] started from finite mass z."""
    report = classify(model)
    if not math.isfinite(report.energy):
        raise PreconditionViolation(
            "explosion-time transform needs a finite energy integral")
    if not (z > 0.0 and math.isfinite(z)):
        raise DomainError("z must be in (0, inf)")
    sol = solution if solution is not None else solve_eigen(model, theta)
    if sol.theta != theta:
        raise DomainError("solution was built for a different theta")
    l_zero = sol.log_h_minus_at_zero
    if math.isinf(l_zero):
        return 0.0

    s_grid = np.log(sol.grid)
    spline = _log_ratio_spline(s_grid, sol.log_h_minus, l_zero)
    s_lo, s_hi = float(s_grid[0]), float(s_grid[-1])

    def f(x: float) -> float:
        if x <= 0.0:
            return 0.0
        s = min(max(math.log(x), s_lo), s_hi)
        return z * math.exp(-z * x + min(float(spline(s)), 0.0))

    cap = min(X_MAX, 60.0 / z)
    value = quad_interval(f, 0.0, cap, rtol=1e-10, atol=1e-14)
    if cap >= X_MAX:
        value += math.exp(-z * X_MAX) * math.exp(min(float(spline(s_hi)), 0.0))
    return min(1.0, max(0.0, value))


def _mean_kernel(model: LogisticModel):
    """Occupation density of the Laplace-dual diffusion run down from +inf.

    Returns x -> (2/(c x)) e^{-Q(x)} int_0^x e^{Q(eta)} d eta; the inner
    product P(x) solves P' = -(2 Psi/(c x)) P + x as a linear ODE, which
    never leaves float range even where e^{Q} alone would overflow.
    """
    psi, c = model.psi, model.c
    s_lo, s_hi = math.log(1e-17), math.log(1e10)
    x_lo = math.exp(s_lo)

    def rhs(s: float, y) -> list:
        x = math.exp(s)
        return [(-2.0 * float(psi.evaluate(x)) / c) * y[0] + x]

    sol = solve_ivp(rhs, (s_lo, s_hi), [x_lo], method="LSODA",
                    dense_output=True, rtol=1e-10, atol=1e-280)
    if not sol.success:
        raise StiffnessFailure(f"mean-extinction kernel: {sol.message}")

    def f(x: float) -> float:
        if x <= 0.0:
            return 0.0
        s = math.log(x)
        if s > s_hi:
            return 0.0
        s = max(s, s_lo)
        p = float(sol.sol(s)[0])
        return (2.0 / (c * x)) * max(p, 0.0)

    return f


def mean_extinction(model: LogisticModel, z: float) -> float:
    """Expected extinction time from mass z (z = inf allowed), possibly inf."""
    report = classify(model)
    if math.isfinite(report.energy):
        raise PreconditionViolation(
            "mean extinction time is defined for non-explosive models only")
    if not report.grey:
        raise PreconditionViolation(
            "mean extinction time needs a finite upper integral of 1/Psi")
    if not z > 0.0:
        raise DomainError("z must be in (0, inf]")

    # the finiteness criterion scans the z-free kernel near 0
    probe = _mean_kernel(model)
    lower_probe = improper_lower(probe, 1.0)
    if lower_probe.verdict is Verdict.INDETERMINATE:
        raise Indeterminate("mean-extinction finiteness test did not settle",
                            partial=lower_probe.value)
    if lower_probe.infinite:
        return math.inf

    if math.isinf(z):
        f = probe
        lower = lower_probe
    else:
        def f(x: float, _z: float = z) -> float:
            return -math.expm1(-_z * x) * probe(x)
        lower = improper_lower(f, 1.0)
    upper = improper_upper(f, 1.0)
    for part, side in ((lower, "lower"), (upper, "upper")):
        if part.verdict is Verdict.INDETERMINATE:
            raise Indeterminate(f"mean-extinction {side} part did not settle",
                                partial=part.value)
        if part.infinite:
            return math.inf
    return lower.value + upper.value


class SZFunction:
    """Laplace-type transform a -> int_0^inf e^{-a x} e^{-Q(x)} dx/(c x).

    Values are memoized per level; each is a pair of improper scans, so a
    can sit at 0 where the integral may legitimately diverge.
    """

    def __init__(self, model: LogisticModel, x0: float = 1.0):
        self.model = model
        self._q = q_function(model, x0)
        self._vals: dict[float, float] = {}
        self._lock = threading.Lock()

    def __call__(self, a: float) -> float:
        if a < 0.0 or math.isnan(a):
            raise DomainError("level a must be >= 0")
        key = float(a)
        with self._lock:
            if key in self._vals:
                return self._vals[key]
        q, c = self._q, self.model.c

        def f(x: float) -> float:
            return _exp(-key * x - q(x)) / (c * x)

        lower = improper_lower(f, 1.0)
        if lower.verdict is Verdict.INDETERMINATE:
            raise Indeterminate("transform lower part did not settle")
        if lower.infinite:
            value = math.inf
        else:
            upper = improper_upper(f, 1.0)
            if upper.verdict is Verdict.INDETERMINATE:
                raise Indeterminate("transform upper part did not settle")
            value = math.inf if upper.infinite else lower.value + upper.value
        with self._lock:
            self._vals[key] = value
        return value


@lru_cache(maxsize=64)
def s_z_function(model: LogisticModel) -> SZFunction:
    """Shared memoized transform for the model."""
    return SZFunction(model)


def _require_reflecting(model: LogisticModel) -> None:
    report = classify(model)
    if report.z_infty is not BoundaryKind.REGULAR_REFLECTING:
        raise PreconditionViolation(
            "operation needs the regular reflecting regime at infinity "
            "(finite energy integral and 2 lam/c < 1)")


def local_time_exponent_zero(model: LogisticModel) -> float:
    """Mass rate kappa(0) of excursions from the reflecting boundary."""
    _require_reflecting(model)
    s0 = classify(model).s_z_zero
    return 0.0 if math.isinf(s0) else 1.0 / s0


def excursion_infimum_cdf(model: LogisticModel, a: float) -> float:
    """Excursion-measure mass of paths dipping to level a or below."""
    _require_reflecting(model)
    if model.psi.profile().subordinator_exponent:
        raise PreconditionViolation(
            "excursion infimum law needs -Psi to not be a subordinator "
            "exponent; paths would be monotone")
    value = s_z_function(model)(a)
    return 0.0 if math.isinf(value) else 1.0 / value


def excursion_occupation(model: LogisticModel, x: float) -> float:
    """Occupation weight int_x^inf e^{Q(y)} dy, possibly inf.

    Meaningful as an excursion law in the reflecting regime, but the
    integral itself is computed for any model; finiteness at x > 0 is
    equivalent to -Psi being a subordinator exponent with positive drift,
    infinite small-jump activity, or total jump mass + lam above c/2.
    """
    if x < 0.0 or math.isnan(x):
        raise DomainError("x must be >= 0")
    q = q_function(model)

    def f(y: float) -> float:
        return _exp(q(y))

    anchor = max(x, 1.0)
    upper = improper_upper(f, anchor)
    if upper.verdict is Verdict.INDETERMINATE:
        raise Indeterminate("occupation upper part did not settle")
    if upper.infinite:
        return math.inf
    total = upper.value
    if x < anchor:
        if x > 0.0:
            total += quad_interval(f, x, anchor, rtol=1e-10)
        else:
            lower = improper_lower(f, anchor)
            if lower.verdict is Verdict.INDETERMINATE:
                raise Indeterminate("occupation lower part did not settle")
            if lower.infinite:
                return math.inf
            total += lower.value
    return total


def n_zeta_mean(model: LogisticModel) -> float:
    """Mean excursion length under the excursion measure, possibly inf."""
    return excursion_occupation(model, 0.0)


def fractal_dimension(model: LogisticModel) -> float:
    """Hausdorff (= packing) dimension of the set of touch times at infinity."""
    _require_reflecting(model)
    return 2.0 * model.psi.lam / model.c
