"""Reduced dynamics between the two flat arcs.

In the folded picture a trajectory near the period-2 orbit is described by
the x-coordinate ``x_m`` of its m-th collision with a flat arc and the angle
``w_m`` between its velocity and the y-axis (positive when moving towards
smaller x).  Consecutive collisions satisfy exactly

    x_m - x_{m+1} = tan(w_m) * (2 + |x_m|^beta + |x_{m+1}|^beta)
    w_m - w_{m+1} = 2 * arctan(beta * sign(x_{m+1}) * |x_{m+1}|^(beta-1))

which is what this module iterates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit

from . import _kernel as K
from .errors import NoConvergence, Unclassified, InvalidParams

RESIDUAL_TOL = 1e-14
# m is in the corridor regime once the wall slopes at consecutive collisions
# differ by less than a quarter
REGIME_RATIO = 0.75
# shadowing of the separatrix: w_m >= SHADOW_FACTOR * w_{n'}
SHADOW_FACTOR = 4.0


class ExitType(str, Enum):
    PASS_THROUGH = "pass_through"
    TURN_BACK = "turn_back"
    CONVERGED = "converged"


@dataclass(frozen=True)
class CorridorState:
    x: float
    w: float
    m: int = 0


# ------------------------------------------------------------------ kernels


@njit(cache=True)
def _solve_next_x(beta, x, w):
    """x' solving x' = x - tan(w) (2 + |x|^beta + |x'|^beta); (x', ok)."""
    t = math.tan(w)
    c = x - t * (2.0 + K.abspow(x, beta))
    xp = x - 2.0 * t
    # damped fixed point; contraction factor ~ beta |x|^(beta-1) tan w
    for _ in range(100):
        xn = c - t * K.abspow(xp, beta)
        if abs(xn - xp) <= 1e-16 * (1.0 + abs(xn)):
            xp = xn
            break
        xp = xn
    # Newton polish
    for _ in range(8):
        f = xp - c + t * K.abspow(xp, beta)
        df = 1.0 + t * K.flat_slope(xp, beta)
        if df == 0.0:
            break
        d = f / df
        xp -= d
        if abs(d) <= 1e-17 * (1.0 + abs(xp)):
            break
    res = xp - c + t * K.abspow(xp, beta)
    ok = math.isfinite(xp) and abs(res) < RESIDUAL_TOL
    return xp, ok


@njit(cache=True)
def _step(beta, x, w):
    xp, ok = _solve_next_x(beta, x, w)
    dw = 2.0 * math.atan(K.flat_slope(xp, beta))
    return xp, w - dw, x - xp, dw, ok


@njit(cache=True)
def _linear_bound(beta, x, w):
    """x - tan(w)(2 + |x|^beta): the next x lies beyond this value in the direction of motion."""
    return x - math.tan(w) * (2.0 + K.abspow(x, beta))


@njit(cache=True)
def _trace(beta, x0, w0, x_exit, m_max):
    """Arrays (x, w, dx, dw) and status: 0 stored exit or m_max, 1 solve failure,
    +-3 ray passes beyond the window (sign of the side) without a flat-arc collision."""
    xs = np.empty(m_max + 1)
    ws = np.empty(m_max + 1)
    dxs = np.zeros(m_max + 1)
    dws = np.zeros(m_max + 1)
    xs[0] = x0
    ws[0] = w0
    x = x0
    w = w0
    for m in range(1, m_max + 1):
        xp, wp, dx, dw, ok = _step(beta, x, w)
        if not ok:
            c = _linear_bound(beta, x, w)
            if abs(c) >= x_exit:
                return xs[:m], ws[:m], dxs[:m], dws[:m], 3 if c > 0 else -3
            return xs[:m], ws[:m], dxs[:m], dws[:m], 1
        dxs[m - 1] = dx
        dws[m - 1] = dw
        xs[m] = xp
        ws[m] = wp
        x = xp
        w = wp
        if abs(x) >= x_exit:
            return xs[: m + 1], ws[: m + 1], dxs[: m + 1], dws[: m + 1], 0
    return xs, ws, dxs, dws, 0


@njit(cache=True)
def _classify(beta, x0, w, m_max):
    """+1 pass-through, -1 turn-back, 0 undecided within m_max, 2 solver failure."""
    x = x0
    for _ in range(m_max):
        xp, wp, _, _, ok = _step(beta, x, w)
        if not ok:
            # no flat-arc collision: the ray leaves on the side of the bound
            c = _linear_bound(beta, x, w)
            if c * x0 < 0.0 and abs(c) >= abs(x0):
                return 1
            return 2
        x = xp
        w = wp
        if x * x0 < 0.0 and w * x0 > 0.0:
            return 1
        if w * x0 <= 0.0 and x * x0 > 0.0:
            return -1
    return 0


@njit(cache=True)
def _bisect_separatrix(beta, x0, lo, hi, m_max, tol):
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= tol:
            break
        c = _classify(beta, x0, mid, m_max)
        if c == 1:
            hi = mid
        elif c == -1:
            lo = mid
        else:
            return lo, hi, c
    return lo, hi, 1


# --------------------------------------------------------------- public API


def corridor_step(beta: float, s: CorridorState, x_exit: float | None = None) -> CorridorState:
    """One collision of the corridor recurrence.

    ``x_exit`` is informational: the returned state may lie beyond it, callers
    detect the exit with ``left_window``.
    """
    if not (abs(s.w) < math.pi / 2):
        raise NoConvergence(f"|w| must be below pi/2, got {s.w}")
    xp, wp, _, _, ok = _step(float(beta), float(s.x), float(s.w))
    if not ok:
        raise NoConvergence(f"implicit x-update failed from x={s.x}, w={s.w}")
    return CorridorState(float(xp), float(wp), s.m + 1)


def left_window(s: CorridorState, x_exit: float) -> bool:
    return abs(s.x) >= x_exit


@dataclass
class CorridorTrace:
    beta: float
    x: np.ndarray
    w: np.ndarray
    dx: np.ndarray = field(repr=False)  # x_m - x_{m+1}, from the recurrence
    dw: np.ndarray = field(repr=False)  # w_m - w_{m+1}, from the recurrence
    exit_type: ExitType
    n_prime: int | None
    n_dprime: int | None

    @property
    def n(self) -> int:
        return len(self.x) - 1

    @property
    def states(self) -> list[CorridorState]:
        return [CorridorState(float(a), float(b), m) for m, (a, b) in enumerate(zip(self.x, self.w))]

    def z(self) -> np.ndarray:
        return np.abs(self.x) ** ((self.beta - 2) / 2)

    def Z(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.z()

    def q(self) -> np.ndarray:
        """w_m^2 - 2 x_m^beta."""
        return self.w**2 - 2 * np.abs(self.x) ** self.beta

    def q_increments(self) -> np.ndarray:
        """q_{m+1} - q_m evaluated from the per-step differences (no cancellation of q itself)."""
        b = self.beta
        x, w, dx, dw = self.x[:-1], self.w[:-1], self.dx[:-1], self.dw[:-1]
        xb = np.abs(x) ** b
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(x != 0, -dx / x, 0.0)
            # x_{m+1}^b - x_m^b = x_m^b * expm1(b * log1p(-dx/x_m)) for same-sign x
            dxb = np.where(rho > -1, xb * np.expm1(b * np.log1p(np.maximum(rho, -1 + 1e-300))), np.nan)
        dwsq = -dw * (2 * w - dw)
        return dwsq - 2 * dxb

    def to_rows(self):
        Z = self.Z()
        z = self.z()
        q = self.q()
        for m in range(len(self.x)):
            yield m, self.x[m], self.w[m], z[m], Z[m], q[m]


def _indices(x: np.ndarray, w: np.ndarray, exit_type: ExitType):
    n_prime = n_dprime = None
    if exit_type is ExitType.PASS_THROUGH:
        idx = np.nonzero((x[:-1] > 0) & (x[1:] < 0))[0]
        if len(idx):
            n_prime = int(idx[0])
            below = np.nonzero(w[1 : n_prime + 1] < 2 * w[n_prime])[0]
            n_dprime = int(below[0]) + 1 if len(below) else n_prime
    elif exit_type is ExitType.TURN_BACK:
        n_prime = int(np.argmin(x))
    return n_prime, n_dprime


def corridor_trace(beta: float, x0: float, w0: float, x_exit: float, m_max: int = 100_000) -> CorridorTrace:
    """Iterate from (x0, w0) until |x| >= x_exit or m_max collisions."""
    if not (0 < x_exit):
        raise InvalidParams("x_exit must be positive")
    xs, ws, dxs, dws, st = _trace(float(beta), float(x0), float(w0), float(x_exit), int(m_max))
    if st == 1:
        raise NoConvergence(f"implicit x-update failed after {len(xs) - 1} steps")
    if st != 0:
        exit_type = ExitType.PASS_THROUGH if st * x0 < 0 else ExitType.TURN_BACK
    elif abs(xs[-1]) >= x_exit and len(xs) > 1:
        exit_type = ExitType.PASS_THROUGH if xs[-1] * x0 < 0 else ExitType.TURN_BACK
    else:
        exit_type = ExitType.CONVERGED
    n_prime, n_dprime = _indices(xs, ws, exit_type)
    return CorridorTrace(float(beta), xs, ws, dxs, dws, exit_type, n_prime, n_dprime)


def classify(beta: float, x0: float, w: float, m_max: int = 100_000) -> ExitType:
    c = _classify(float(beta), float(x0), float(w), int(m_max))
    if c == 2:
        raise NoConvergence("implicit x-update failed during classification")
    return {1: ExitType.PASS_THROUGH, -1: ExitType.TURN_BACK, 0: ExitType.CONVERGED}[c]


def locate_stable_manifold(
    beta: float, x0: float, m_max: int = 100_000, w_hi: float = 0.8, tol: float = 1e-15
) -> float:
    """Angle w* at x0 separating turn-back (w < w*) from pass-through (w > w*)."""
    if not (x0 > 0):
        raise InvalidParams("x0 must be positive")
    lo, hi = 0.0, float(w_hi)
    c_lo = _classify(float(beta), float(x0), lo, int(m_max))
    c_hi = _classify(float(beta), float(x0), hi, int(m_max))
    # steep angles leave the corridor regime; shrink until the solve succeeds
    while c_hi == 2 and hi > 1e-6:
        hi *= 0.5
        c_hi = _classify(float(beta), float(x0), hi, int(m_max))
    if c_lo == 0 and c_hi == 0:
        raise Unclassified("neither bracket end classified; increase m_max")
    if c_lo != -1 or c_hi != 1:
        raise Unclassified(f"bracket [{lo}, {hi}] does not straddle the separatrix ({c_lo}, {c_hi})")
    lo, hi, _ = _bisect_separatrix(float(beta), float(x0), lo, hi, int(m_max), tol)
    return 0.5 * (lo + hi)


# ------------------------------------------------------------- diagnostics


@dataclass
class LemmaReport:
    beta: float
    n: int
    n_prime: int
    n_dprime: int
    monotone_violations: int
    wsq_over_xbeta: tuple[float, float]
    difference_ratio: tuple[float, float] | None
    z_increment_tail: float
    z_increment_L: float
    x_over_linear: tuple[float, float] | None
    w_nprime: float

    def to_dict(self) -> dict:
        return {
            "monotonicity": {"violations": self.monotone_violations, "n_prime": self.n_prime},
            "wsq_over_xbeta": {"min": self.wsq_over_xbeta[0], "max": self.wsq_over_xbeta[1]},
            "difference_ratio": None
            if self.difference_ratio is None
            else {"min": self.difference_ratio[0], "max": self.difference_ratio[1]},
            "z_increments": {
                "tail_average": self.z_increment_tail,
                "L": self.z_increment_L,
                "ratio": self.z_increment_tail / self.z_increment_L,
            },
            "x_over_linear": None
            if self.x_over_linear is None
            else {"min": self.x_over_linear[0], "max": self.x_over_linear[1]},
            "exponents": {"n": self.n, "n_prime": self.n_prime, "n_dprime": self.n_dprime, "w_nprime": self.w_nprime},
        }


def monotonicity_violations(trace: CorridorTrace) -> int:
    """Steps m in [1, n') where w^2 - 2x^beta fails to increase.

    A decrease smaller than the rounding allowance of the step terms is not
    resolvable in double precision and is not counted.
    """
    npr = trace.n_prime
    if npr is None or npr < 2:
        return 0
    inc = trace.q_increments()[1:npr]
    w = trace.w[1:npr]
    dw = trace.dw[1:npr]
    scale = 8 * np.finfo(float).eps * (np.abs(dw * (2 * w - dw)) + 1e-300)
    return int(np.sum(~(inc > -scale)))


def corridor_regime(trace: CorridorTrace, upto: int) -> np.ndarray:
    """Indices m in [1, upto) with slope(x_{m+1}) >= REGIME_RATIO * slope(x_m) > 0."""
    m = np.arange(1, upto)
    x = trace.x
    p = trace.beta - 1
    good = (x[m] > 0) & (x[m + 1] > 0) & (x[m + 1] ** p >= REGIME_RATIO * x[m] ** p)
    return m[good]


def lemma_diagnostics(trace: CorridorTrace, beta: float | None = None) -> LemmaReport:
    if beta is None:
        beta = trace.beta
    if trace.exit_type is not ExitType.PASS_THROUGH or trace.n_prime is None:
        raise InvalidParams("lemma diagnostics need a pass-through trace")
    x, w = trace.x, trace.w
    npr, ndp = trace.n_prime, trace.n_dprime
    L = (beta - 2) * math.sqrt(2)

    lo = min(10, ndp)
    ms = np.arange(lo, ndp + 1)
    ratio = w[ms] ** 2 / x[ms] ** beta

    reg = corridor_regime(trace, ndp)
    diff_ratio = None
    if len(reg):
        num = trace.dw[reg] * (2 * w[reg] - trace.dw[reg])
        den = x[reg] ** beta - x[reg + 1] ** beta
        dr = num / den
        diff_ratio = (float(dr.min()), float(dr.max()))

    Z = trace.Z()
    shadow = np.nonzero(w[: ndp + 1] >= SHADOW_FACTOR * w[npr])[0]
    end = int(shadow[-1]) if len(shadow) else ndp
    start = max(1, end // 2)
    if end <= start:
        start, end = 1, max(2, ndp)
    tail = float(np.mean(np.diff(Z[start : end + 1])))

    x_lin = None
    if npr > ndp:
        mm = np.arange(ndp, npr)
        xl = x[mm] / ((npr - mm) * w[npr])
        x_lin = (float(xl.min()), float(xl.max()))

    return LemmaReport(
        beta=float(beta),
        n=trace.n,
        n_prime=int(npr),
        n_dprime=int(ndp),
        monotone_violations=monotonicity_violations(trace),
        wsq_over_xbeta=(float(ratio.min()), float(ratio.max())),
        difference_ratio=diff_ratio,
        z_increment_tail=tail,
        z_increment_L=L,
        x_over_linear=x_lin,
        w_nprime=float(w[npr]),
    )


def separatrix_family(
    beta: float, x0: float, x_exit: float, offsets, m_max: int = 1_000_000
) -> list[CorridorTrace]:
    """Pass-through traces started at w* + offset for each offset > 0."""
    ws = locate_stable_manifold(beta, x0, m_max=m_max)
    return [corridor_trace(beta, x0, ws + d, x_exit, m_max) for d in offsets]


def w_nprime_exponent(traces, n_range=(50, 2000)):
    """Least-squares slope of log w_{n'} against log n over traces with n in range."""
    pts = [
        (t.n, t.w[t.n_prime])
        for t in traces
        if t.exit_type is ExitType.PASS_THROUGH and t.n_prime is not None and n_range[0] <= t.n <= n_range[1]
    ]
    if len(pts) < 3:
        raise InvalidParams("need at least three traces inside n_range")
    n, wn = np.array(pts).T
    slope, intercept = np.polyfit(np.log(n), np.log(wn), 1)
    return float(slope), float(intercept), len(pts)


# ------------------------------------------------- geometry correspondence


def phase_of_corridor(table, x: float, w: float, on_top: bool) -> tuple[int, float, float]:
    """Kernel state (comp, u, phi) of a corridor collision at x on a flat arc."""
    theta = math.atan(K.flat_slope(float(x), table.beta))
    if on_top:
        return K.TOP, float(x), w + theta
    return K.LOWER, float(x), -(w + theta)


def corridor_of_phase(table, comp: int, u: float, phi: float) -> tuple[float, float]:
    theta = math.atan(K.flat_slope(float(u), table.beta))
    if comp == K.TOP:
        return float(u), phi - theta
    return float(u), -phi - theta


@njit(cache=True)
def _count_in_window(beta, x, w, eps, cap):
    """Consecutive collisions with |x| < eps starting with the current one (<= cap)."""
    n = 1
    while n < cap:
        xp, wp, _, _, ok = _step(beta, x, w)
        if not ok or abs(xp) >= eps:
            return n
        x = xp
        w = wp
        n += 1
    return cap
