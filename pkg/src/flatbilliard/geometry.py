"""Billiard tables bounded by y = +-(|x|^beta + 1) and circular closing arcs.

The boundary is traversed counterclockwise (interior on the left) starting
at the left end of the lower component, so ``r = 0`` is the point
``(-X, -g(X))`` on the full table and ``(-p, 0)`` on the half table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernel as K
from .errors import GeometryError, InvalidParams, OutOfRange

DEFAULT_HALF_WIDTH = 0.75
DEFAULT_CLOSURE_SLACK = 5.0
ARCLENGTH_GRID = 2048
TRANSVERSAL_TOL = 1e-9
NEAR_FLAT_CURVATURE = 1e-2


class Variant(str, Enum):
    FULL = "full"
    HALF = "half"


class ComponentKind(str, Enum):
    FLAT_CURVE_TOP = "flat_curve_top"
    FLAT_CURVE_BOTTOM = "flat_curve_bottom"
    CIRCULAR_ARC = "circular_arc"
    STRAIGHT_SEGMENT = "straight_segment"


def g_beta(x, beta):
    """|x|^beta + 1, with the x = 0 case exact."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        p = np.where(ax > 0, np.exp(beta * np.log(np.where(ax > 0, ax, 1.0))), 0.0)
    out = 1.0 + p
    return float(out) if out.ndim == 0 else out


def flat_curvature(beta: float, x: float) -> float:
    """Curvature of y = |x|^beta + 1 at x."""
    if beta <= 2:
        raise InvalidParams(f"beta must exceed 2, got {beta}")
    return float(K.flat_curvature(float(x), float(beta)))


@dataclass(frozen=True)
class FlatFamilyParams:
    beta: float
    half_width: float = DEFAULT_HALF_WIDTH
    closure_slack: float = DEFAULT_CLOSURE_SLACK
    variant: Variant = Variant.FULL

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not (math.isfinite(self.beta) and self.beta > 2):
            raise InvalidParams(f"beta must exceed 2, got {self.beta}")
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise InvalidParams(f"half_width must be positive, got {self.half_width}")
        if not (self.closure_slack > 0 and math.isfinite(self.closure_slack)):
            raise InvalidParams(f"closure_slack must be positive, got {self.closure_slack}")


@dataclass(frozen=True)
class BoundaryComponent:
    kind: ComponentKind
    arclength_start: float
    arclength_end: float
    orientation: str = "interior_left"
    center: tuple[float, float] | None = None
    radius: float | None = None
    sign: int | None = None
    endpoints: tuple[tuple[float, float], tuple[float, float]] | None = None

    @property
    def length(self) -> float:
        return self.arclength_end - self.arclength_start

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind.value,
            "arclength_start": self.arclength_start,
            "arclength_end": self.arclength_end,
            "orientation": self.orientation,
        }
        if self.center is not None:
            d["center"] = list(self.center)
            d["radius"] = self.radius
        if self.sign is not None:
            d["sign"] = self.sign
        if self.endpoints is not None:
            d["endpoints"] = [list(p) for p in self.endpoints]
        return d


@dataclass(frozen=True)
class BoundaryPoint:
    r: float
    position: tuple[float, float]
    unit_tangent: tuple[float, float]
    unit_inward_normal: tuple[float, float]
    curvature: float
    component_id: int


@dataclass(frozen=True, eq=False)
class BetaTable:
    params: FlatFamilyParams
    components: tuple[BoundaryComponent, ...]
    total_length: float
    geo: np.ndarray = field(repr=False)
    grid_x: np.ndarray = field(repr=False)
    grid_s: np.ndarray = field(repr=False)

    @property
    def beta(self) -> float:
        return self.params.beta

    @property
    def variant(self) -> Variant:
        return self.params.variant

    @property
    def flat_components(self) -> tuple[int, ...]:
        return (K.LOWER, K.TOP) if self.variant is Variant.FULL else (K.TOP,)

    @property
    def diameter(self) -> float:
        xs = self.params.half_width + self.params.closure_slack - self.geo[K.RADIUS]
        ymax = g_beta(self.params.half_width, self.beta)
        height = 2 * ymax if self.variant is Variant.FULL else ymax
        return math.hypot(2 * max(xs, self.params.half_width), height)

    def arclength_of_x(self, x: float) -> float:
        """Signed arc length along a flat curve from x = 0."""
        return float(K.flat_arclength(self.geo, self.grid_x, self.grid_s, float(x)))

    def x_of_arclength(self, s: float) -> float:
        return float(K.flat_x_of_arclength(self.geo, self.grid_x, self.grid_s, float(s)))

    def r_of(self, comp: int, u: float) -> float:
        return float(K.r_of_state(self.geo, self.grid_x, self.grid_s, int(comp), float(u)))

    def state_of(self, r: float) -> tuple[int, float]:
        c, u = K.state_of_r(self.geo, self.grid_x, self.grid_s, float(r))
        return int(c), float(u)

    def r_of_flat_point(self, x: float, top: bool) -> float:
        comp = K.TOP if top else K.LOWER
        if comp not in self.flat_components:
            raise GeometryError("the half table has no bottom flat curve")
        return self.r_of(comp, x)

    def corner_points(self, epsilon: float) -> tuple[float, ...]:
        """r-values of the window borders q1..q4 (q1 = (eps, -g(eps)))."""
        if self.variant is Variant.FULL:
            pts = [(K.LOWER, epsilon), (K.LOWER, -epsilon), (K.TOP, -epsilon), (K.TOP, epsilon)]
        else:
            pts = [(K.TOP, -epsilon), (K.TOP, epsilon)]
        return tuple(self.r_of(c, x) for c, x in pts)

    def window_intervals(self, epsilon: float) -> list[tuple[float, float]]:
        """r-intervals occupied by the window |x| < epsilon, sorted."""
        out = []
        for comp in self.flat_components:
            a, b = self.r_of(comp, -epsilon), self.r_of(comp, epsilon)
            out.append((min(a, b), max(a, b)))
        return sorted(out)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "half_width": self.params.half_width,
            "closure_slack": self.params.closure_slack,
            "variant": self.variant.value,
            "components": [c.to_dict() for c in self.components],
            "total_length": self.total_length,
        }


def closing_arc(beta: float, half_width: float, closure_slack: float) -> tuple[tuple[float, float], float]:
    """Center and radius of the right closing circle through (X, +-g(X))."""
    g = g_beta(half_width, beta)
    cx = half_width + closure_slack
    return (cx, 0.0), math.hypot(closure_slack, g)


def _check_closure(params: FlatFamilyParams, radius: float) -> None:
    X, s, beta = params.half_width, params.closure_slack, params.beta
    g = g_beta(X, beta)
    gp = beta * X ** (beta - 1)
    # the flat curve must leave the closing disc at the junction
    if s - g * gp <= TRANSVERSAL_TOL:
        raise GeometryError(
            f"closing arc is not convex inward at the junction (s={s} <= g*g'={g * gp:.6g})"
        )
    if X + s - radius <= 0:
        raise GeometryError("closing arcs reach across the y-axis")
    xs = np.linspace(-X, X, 4001)[:-1]
    d = np.hypot(xs - (X + s), g_beta(xs, beta))
    if np.any(d <= radius):
        raise GeometryError("closing arc intersects a flat curve")


def build_table(params: FlatFamilyParams) -> BetaTable:
    if not isinstance(params, FlatFamilyParams):
        raise InvalidParams("expected FlatFamilyParams")
    beta, X, s = params.beta, params.half_width, params.closure_slack
    (cx, _), R = closing_arc(beta, X, s)
    _check_closure(params, R)
    g = g_beta(X, beta)
    alpha = math.atan2(g, s)
    half = params.variant is Variant.HALF
    floor = X + s - R if half else 0.0

    gx, gs = K.build_arclength_grid(float(beta), float(X), ARCLENGTH_GRID)
    flat_len = float(gs[-1])
    arc_len = R * (alpha if half else 2 * alpha)
    lengths = [2 * floor if half else 2 * flat_len, arc_len, 2 * flat_len, arc_len]
    offsets = np.concatenate([[0.0], np.cumsum(lengths)])

    geo = np.zeros(K.GEO_SIZE)
    geo[K.BETA] = beta
    geo[K.HALF_WIDTH] = X
    geo[K.SLACK] = s
    geo[K.RADIUS] = R
    geo[K.ALPHA] = alpha
    geo[K.FLOOR] = floor
    geo[K.VARIANT] = 1.0 if half else 0.0
    geo[K.FLAT_LEN] = flat_len
    geo[K.LEN0 : K.LEN0 + 4] = lengths
    geo[K.OFF0 : K.OFF0 + 4] = offsets[:4]
    geo[K.TOTAL] = offsets[4]
    geo.setflags(write=False)
    gx.setflags(write=False)
    gs.setflags(write=False)

    comps = []
    if half:
        comps.append(
            BoundaryComponent(
                ComponentKind.STRAIGHT_SEGMENT, offsets[0], offsets[1],
                endpoints=((-floor, 0.0), (floor, 0.0)),
            )
        )
    else:
        comps.append(BoundaryComponent(ComponentKind.FLAT_CURVE_BOTTOM, offsets[0], offsets[1], sign=-1))
    comps.append(BoundaryComponent(ComponentKind.CIRCULAR_ARC, offsets[1], offsets[2], center=(cx, 0.0), radius=R))
    comps.append(BoundaryComponent(ComponentKind.FLAT_CURVE_TOP, offsets[2], offsets[3], sign=1))
    comps.append(BoundaryComponent(ComponentKind.CIRCULAR_ARC, offsets[3], offsets[4], center=(-cx, 0.0), radius=R))

    table = BetaTable(params, tuple(comps), float(offsets[4]), geo, gx, gs)
    report = validate_table(table)
    if not report.transversal:
        raise GeometryError(f"junction tangents (nearly) parallel: angles {report.junction_angles}")
    return table


def _frame(table: BetaTable, comp: int, u: float):
    return K.frame(table.geo, int(comp), float(u))


def boundary_point(table: BetaTable, r: float) -> BoundaryPoint:
    L = table.total_length
    if not (0.0 <= r < L):
        raise OutOfRange(f"r={r} outside [0, {L})")
    comp, u = table.state_of(r)
    return point_at_state(table, comp, u, r=r)


def point_at_state(table: BetaTable, comp: int, u: float, r: float | None = None) -> BoundaryPoint:
    px, py, tx, ty, nx, ny, k = _frame(table, comp, u)
    if r is None:
        r = table.r_of(comp, u)
    return BoundaryPoint(r, (px, py), (tx, ty), (nx, ny), k, int(comp))


# ----------------------------------------------------------------- validation


@dataclass
class ValidationReport:
    junction_angles: list[float]
    min_closing_curvature: list[float]
    continuity_residuals: list[float]
    near_flat_closure: bool
    flat_curvature_zero_only_at_origin: bool

    @property
    def transversal(self) -> bool:
        return all(TRANSVERSAL_TOL < a < math.pi - TRANSVERSAL_TOL for a in self.junction_angles)

    @property
    def continuous(self) -> bool:
        return all(r < 1e-10 for r in self.continuity_residuals)

    @property
    def ok(self) -> bool:
        return (
            self.transversal
            and self.continuous
            and all(k > 0 for k in self.min_closing_curvature)
            and not self.near_flat_closure
            and self.flat_curvature_zero_only_at_origin
        )

    def to_dict(self) -> dict:
        return {
            "junction_angles": self.junction_angles,
            "min_closing_curvature": self.min_closing_curvature,
            "continuity_residuals": self.continuity_residuals,
            "near_flat_closure": self.near_flat_closure,
            "flat_curvature_zero_only_at_origin": self.flat_curvature_zero_only_at_origin,
            "transversal": self.transversal,
            "continuous": self.continuous,
            "ok": self.ok,
        }


def validate_table(table: BetaTable) -> ValidationReport:
    angles, residuals, closing = [], [], []
    n = len(table.components)
    for i in range(n):
        # end of component i against start of component i+1
        pe = _component_end_frame(table, i, end=True)
        ps = _component_end_frame(table, (i + 1) % n, end=False)
        residuals.append(math.hypot(pe[0] - ps[0], pe[1] - ps[1]))
        t_in = np.array(pe[2:4])
        t_out = np.array(ps[2:4])
        turn = math.atan2(t_in[0] * t_out[1] - t_in[1] * t_out[0], float(t_in @ t_out))
        angles.append(math.pi - turn)
    for comp in table.components:
        if comp.kind is ComponentKind.CIRCULAR_ARC:
            closing.append(1.0 / comp.radius)
    xs = np.linspace(-table.params.half_width, table.params.half_width, 2001)
    ks = np.array([K.flat_curvature(float(x), table.beta) for x in xs])
    zero_ok = bool(np.all((ks > 0) | (xs == 0)) and ks[1000] == 0.0)
    return ValidationReport(
        junction_angles=angles,
        min_closing_curvature=closing,
        continuity_residuals=residuals,
        near_flat_closure=min(closing) < NEAR_FLAT_CURVATURE,
        flat_curvature_zero_only_at_origin=zero_ok,
    )


def _component_end_frame(table: BetaTable, idx: int, end: bool):
    geo = table.geo
    X = table.params.half_width
    if idx == K.TOP:
        u = -X if end else X
    elif idx == K.LOWER:
        if table.variant is Variant.FULL:
            u = X if end else -X
        else:
            p = geo[K.FLOOR]
            u = p if end else -p
    else:
        start = K._arc_theta_start(geo, idx)
        u = start - geo[K.LEN0 + idx] / geo[K.RADIUS] if end else start
    return _frame(table, idx, u)
