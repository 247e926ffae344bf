"""Curvature of orthogonal fronts and the expansion factors it produces."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from . import _kernel as K
from .billiard import GRAZE_GUARD, CollisionRecord, PhasePoint, WindowSpec, _raise_status, _state
from .errors import DomainError, InvalidParams
from .geometry import BetaTable

DEFAULT_B0 = 1.0
B0_SWEEP = (0.25, 1.0, 4.0)
# n * Lambda2 / Lambda1 counts as "no systematic decay" if its log-log slope exceeds this
SPLIT_SLOPE_FLOOR = -0.25


@dataclass(frozen=True)
class FrontCurvature:
    B: float

    def __post_init__(self):
        if not (self.B > 0 and math.isfinite(self.B)):
            raise DomainError(f"front curvature must be positive and finite, got {self.B}")

    def __float__(self):
        return float(self.B)


def _as_float(B) -> float:
    return float(B.B) if isinstance(B, FrontCurvature) else float(B)


def front_update(K_: float, cos_phi: float, tau_prev: float, B_prev) -> FrontCurvature:
    """Front curvature right after a reflection at curvature K_ and angle phi."""
    b = _as_float(B_prev)
    if not cos_phi > 0:
        raise DomainError(f"cos(phi) must be positive, got {cos_phi}")
    if K_ < 0 or tau_prev <= 0 or b <= 0:
        raise DomainError("need K >= 0, tau > 0 and B > 0")
    return FrontCurvature(2.0 * K_ / cos_phi + 1.0 / (tau_prev + 1.0 / b))


def unstable_slope(B, K_: float, cos_phi: float) -> float:
    """d(phi)/dr of the unstable direction carried by a front of curvature B."""
    return cos_phi * _as_float(B) - K_


def pnorm_ratio(phase: PhasePoint, slope: float) -> float:
    """|V|_p / |V| for the tangent vector (dr, dphi) = (1, slope)."""
    return math.cos(phase.phi) / math.sqrt(1.0 + slope * slope)


@njit(cache=True)
def _front_logs(curv, cosphi, tau, B0):
    """B_m and log(1 + tau_m B_m) along an excursion; B_0 is given."""
    n = tau.shape[0]
    B = np.empty(n)
    logs = np.empty(n)
    b = B0
    for m in range(n):
        if m > 0:
            b = 2.0 * curv[m] / cosphi[m] + 1.0 / (tau[m - 1] + 1.0 / b)
        B[m] = b
        logs[m] = math.log1p(tau[m] * b)
    return B, logs


@dataclass
class ExpansionBreakdown:
    n: int
    n_prime: int
    log_lambda_1: float
    log_lambda_2: float
    B: np.ndarray | None = None

    @property
    def log_lambda_total(self) -> float:
        return self.log_lambda_1 + self.log_lambda_2

    @property
    def lambda_1(self) -> float:
        return math.exp(self.log_lambda_1)

    @property
    def lambda_2(self) -> float:
        return math.exp(self.log_lambda_2)

    @property
    def lambda_total(self) -> float:
        return math.exp(self.log_lambda_total)

    def row(self):
        return self.n, self.n_prime, self.log_lambda_1, self.log_lambda_2, self.log_lambda_total


BREAKDOWN_HEADER = ("n", "n_prime", "log_lambda1", "log_lambda2", "log_lambda_total")


def split_index(x: np.ndarray) -> int:
    """Crossing index (x_m, x_{m+1} on opposite sides of 0) or, failing that,
    the turning index (closest approach to x = 0) of an excursion's x-sequence."""
    x = np.asarray(x, dtype=float)
    s = np.sign(x[0]) or 1.0
    y = s * x
    cross = np.nonzero((y[:-1] > 0) & (y[1:] <= 0))[0]
    if len(cross):
        return int(cross[0])
    return int(np.argmin(y))


def _breakdown(curv, cosphi, tau, x, B0, n_prime=None) -> ExpansionBreakdown:
    if len(tau) < 1:
        raise InvalidParams("excursion needs at least one collision")
    if np.any(cosphi <= 0):
        raise DomainError("cos(phi) <= 0 along the excursion")
    B, logs = _front_logs(curv, cosphi, tau, float(B0))
    n = len(tau)
    if n_prime is None:
        n_prime = split_index(x) if x is not None else n
    n_prime = int(min(max(n_prime, 0), n))
    return ExpansionBreakdown(n, n_prime, float(logs[:n_prime].sum()), float(logs[n_prime:].sum()), B)


def expansion_product(
    excursion: Sequence[CollisionRecord], B0=DEFAULT_B0, n_prime: int | None = None
) -> ExpansionBreakdown:
    """Lambda_n = prod (1 + tau_m B_m) over the records, split at n_prime.

    Every record contributes its free path; pass the n records X_0..X_{n-1}.
    When n_prime is omitted it is read off the x-coordinates of the records.
    """
    b0 = _as_float(B0)
    if not b0 > 0:
        raise DomainError("B0 must be positive")
    curv = np.array([r.point.curvature for r in excursion], dtype=float)
    cosphi = np.array([math.cos(r.phase.phi) for r in excursion], dtype=float)
    tau = np.array([r.tau for r in excursion], dtype=float)
    x = np.array([r.point.position[0] for r in excursion], dtype=float)
    return _breakdown(curv, cosphi, tau, x, b0, n_prime)


@dataclass
class Excursion:
    """States X_0..X_n of one excursion from M back to M (tau has n entries)."""

    comp: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    tau: np.ndarray
    curvature: np.ndarray
    x: np.ndarray

    @property
    def n(self) -> int:
        return len(self.tau)

    @property
    def exit_side(self) -> int:
        """+1 if X_n lies on the same side (sign of x) as X_0, -1 otherwise."""
        return 1 if self.x[-1] * self.x[0] > 0 else -1


def _x_of_states(geo, cs, us) -> np.ndarray:
    out = np.empty(len(cs))
    for i, (c, u) in enumerate(zip(cs, us)):
        out[i] = K.frame(geo, int(c), float(u))[0]
    return out


def excursion_of_state(
    table: BetaTable, comp: int, u: float, phi: float, window: WindowSpec, n_max: int, guard: float = GRAZE_GUARD
) -> Excursion | None:
    """Excursion starting at a kernel state in M; None if longer than n_max."""
    cs, us, ps, ts, n, st = K.excursion_arrays(table.geo, int(comp), float(u), float(phi), window.epsilon, int(n_max), guard)
    _raise_status(st)
    if n > n_max:
        return None
    curv = np.array([K.frame(table.geo, int(c), float(v))[6] for c, v in zip(cs, us)])
    return Excursion(cs, us, ps, ts[:n], curv, _x_of_states(table.geo, cs, us))


def excursion(table: BetaTable, X0: PhasePoint, window: WindowSpec, n_max: int = 100_000, guard=GRAZE_GUARD):
    return excursion_of_state(table, *_state(table, X0), window, n_max, guard)


def expansion_of_excursion(exc: Excursion, B0=DEFAULT_B0, n_prime: int | None = None) -> ExpansionBreakdown:
    n = exc.n
    return _breakdown(exc.curvature[:n], np.cos(exc.phi[:n]), exc.tau, exc.x[: n + 1], _as_float(B0), n_prime)


@dataclass
class SplitRatioReport:
    n: np.ndarray
    ratio: np.ndarray  # n * Lambda2 / Lambda1
    min_ratio: float
    loglog_slope: float
    passed: bool

    def to_dict(self):
        return {
            "min_ratio": self.min_ratio,
            "loglog_slope": self.loglog_slope,
            "slope_floor": SPLIT_SLOPE_FLOOR,
            "n_range": [int(self.n.min()), int(self.n.max())],
            "passed": self.passed,
        }


def split_ratio_check(breakdowns: Sequence[ExpansionBreakdown]) -> SplitRatioReport:
    """min of n * Lambda2 / Lambda1 across the family and its trend in n."""
    n = np.array([b.n for b in breakdowns], dtype=float)
    if len(n) < 3:
        raise InvalidParams("need at least three breakdowns")
    if n.max() < 10 * n.min():
        raise InvalidParams("breakdowns must span at least one decade of n")
    logr = np.log(n) + np.array([b.log_lambda_2 - b.log_lambda_1 for b in breakdowns])
    slope = float(np.polyfit(np.log(n), logr, 1)[0])
    ratio = np.exp(logr)
    mn = float(ratio.min())
    return SplitRatioReport(n, ratio, mn, slope, bool(mn > 0 and slope > SPLIT_SLOPE_FLOOR))
