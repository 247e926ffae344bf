"""The collision map on the full collision space, its inverse, mu-sampling and
return times to the region M outside the flat-point window."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernel as K
from .errors import GrazingCollision, NumericalLoss, OutOfRange, InvalidParams
from .geometry import BetaTable, BoundaryPoint, point_at_state

DEFAULT_EPSILON = 0.4
GRAZE_GUARD = 1e-7
DEFAULT_N_MAX = 100_000


@dataclass(frozen=True)
class PhasePoint:
    r: float
    phi: float

    def reversed(self) -> "PhasePoint":
        return PhasePoint(self.r, -self.phi)


@dataclass(frozen=True)
class WindowSpec:
    epsilon: float = DEFAULT_EPSILON

    def check(self, table: BetaTable) -> None:
        if not (0 < self.epsilon < table.params.half_width):
            raise InvalidParams(
                f"window epsilon must lie in (0, {table.params.half_width}), got {self.epsilon}"
            )


@dataclass(frozen=True)
class CollisionRecord:
    phase: PhasePoint
    point: BoundaryPoint
    tau: float
    in_window: bool


@dataclass(frozen=True)
class Censored:
    n_max: int


@dataclass
class Orbit:
    records: list[CollisionRecord]
    truncated: bool = False

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


def _state(table: BetaTable, X: PhasePoint) -> tuple[int, float, float]:
    if not (0.0 <= X.r < table.total_length):
        raise OutOfRange(f"r={X.r} outside [0, {table.total_length})")
    if abs(X.phi) > math.pi / 2:
        raise OutOfRange(f"phi={X.phi} outside [-pi/2, pi/2]")
    c, u = table.state_of(X.r)
    return c, u, X.phi


def _raise_status(status: int) -> None:
    if status == K.GRAZING:
        raise GrazingCollision("collision within the grazing guard of phi = +-pi/2")
    if status == K.LOST:
        raise NumericalLoss("ray left the table without hitting the boundary")


def phase_of_state(table: BetaTable, comp: int, u: float, phi: float) -> PhasePoint:
    return PhasePoint(table.r_of(comp, u), float(phi))


def step_state(table: BetaTable, comp: int, u: float, phi: float, guard: float = GRAZE_GUARD):
    c, uu, p, tau, st = K.step(table.geo, int(comp), float(u), float(phi), guard)
    _raise_status(st)
    return int(c), float(uu), float(p), float(tau)


def step(table: BetaTable, X: PhasePoint, guard: float = GRAZE_GUARD) -> tuple[PhasePoint, float]:
    c, u, p, tau = step_state(table, *_state(table, X), guard=guard)
    return phase_of_state(table, c, u, p), tau


def involution(X: PhasePoint) -> PhasePoint:
    return X.reversed()


def step_inverse(table: BetaTable, X: PhasePoint, guard: float = GRAZE_GUARD) -> tuple[PhasePoint, float]:
    Y, tau = step(table, X.reversed(), guard=guard)
    return Y.reversed(), tau


def sample_mu(table: BetaTable, rng: np.random.Generator) -> PhasePoint:
    """One point of the normalized invariant measure cos(phi) dr dphi / 2L."""
    r = rng.random() * table.total_length
    phi = math.asin(2.0 * rng.random() - 1.0)
    return PhasePoint(r, phi)


def sample_mu_states(table: BetaTable, rng: np.random.Generator, n: int):
    """Vectorized mu-samples as kernel states (comp, u, phi)."""
    uni = rng.random((n, 2))
    cs, us = K.states_of_r_batch(table.geo, table.grid_x, table.grid_s, uni[:, 0] * table.total_length)
    return cs, us, np.arcsin(2.0 * uni[:, 1] - 1.0)


def in_window(table: BetaTable, window: WindowSpec, X: PhasePoint) -> bool:
    c, u = table.state_of(X.r)
    return bool(K.in_window(table.geo, c, u, window.epsilon))


def return_time(
    table: BetaTable,
    window: WindowSpec,
    X: PhasePoint,
    n_max: int = DEFAULT_N_MAX,
    guard: float = GRAZE_GUARD,
) -> int | Censored:
    """Number of collisions until the orbit of X in M is back in M."""
    window.check(table)
    c, u, p = _state(table, X)
    if K.in_window(table.geo, c, u, window.epsilon):
        raise InvalidParams("return_time needs a starting point in M (outside the window)")
    n, st = K.return_time(table.geo, c, u, p, window.epsilon, int(n_max), guard)
    _raise_status(st)
    if n > n_max:
        return Censored(int(n_max))
    return int(n)


def records_from_arrays(table, window, cs, us, ps, ts) -> list[CollisionRecord]:
    eps = window.epsilon
    out = []
    for c, u, p, t in zip(cs, us, ps, ts):
        pt = point_at_state(table, int(c), float(u))
        out.append(
            CollisionRecord(
                PhasePoint(pt.r, float(p)), pt, float(t), bool(K.in_window(table.geo, int(c), float(u), eps))
            )
        )
    return out


def orbit(
    table: BetaTable,
    X0: PhasePoint,
    n: int,
    window: WindowSpec = WindowSpec(),
    guard: float = GRAZE_GUARD,
) -> Orbit:
    """n consecutive collision records starting at X0.

    Record m carries X_m and the free path from X_m to X_{m+1}.  A grazing
    collision truncates the orbit and sets ``truncated``.
    """
    if n < 1:
        raise InvalidParams("orbit length must be >= 1")
    c, u, p = _state(table, X0)
    cs, us, ps, ts, valid = K.orbit_arrays(table.geo, c, u, p, int(n), guard)
    recs = records_from_arrays(table, window, cs[:valid], us[:valid], ps[:valid], ts[:valid])
    return Orbit(recs, truncated=valid < n)


def reflection_residual(table: BetaTable, X: PhasePoint, guard: float = GRAZE_GUARD) -> float:
    """|angle(incoming, -n) - angle(outgoing, n)| at the collision reached from X."""
    c, u, p = _state(table, X)
    px, py, *_ = K.frame(table.geo, c, u)
    c2, u2, p2, _ = step_state(table, c, u, p, guard)
    qx, qy, tx2, ty2, nx2, ny2, _ = K.frame(table.geo, c2, u2)
    n2 = np.array([nx2, ny2])
    t2 = np.array([tx2, ty2])
    vout = math.cos(p2) * n2 + math.sin(p2) * t2
    # incoming direction as recorded by the chord, independent of the kernel's velocity
    chord = np.array([qx - px, qy - py])
    chord /= np.linalg.norm(chord)
    ang_in = math.atan2(float(chord @ t2), float(-chord @ n2))
    ang_out = math.atan2(float(vout @ t2), float(vout @ n2))
    return abs(ang_in - ang_out)


def m_segments(table: BetaTable, window: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    """Allowed r-intervals of M as (starts, cumulative lengths)."""
    cuts = table.window_intervals(window.epsilon)
    lo, hi = [], []
    cur = 0.0
    for a, b in cuts:
        lo.append(cur)
        hi.append(a)
        cur = b
    lo.append(cur)
    hi.append(table.total_length)
    lo = np.array(lo)
    lengths = np.array(hi) - lo
    return lo, np.concatenate([[0.0], np.cumsum(lengths)])


def window_measure_fraction(table: BetaTable, window: WindowSpec) -> float:
    """mu(window) / mu(full collision space)."""
    return sum(b - a for a, b in table.window_intervals(window.epsilon)) / table.total_length
