import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from flatbilliard import _kernel as K
from flatbilliard.errors import GeometryError, InvalidParams, OutOfRange
from flatbilliard.geometry import (
    FlatFamilyParams,
    boundary_point,
    build_table,
    closing_arc,
    flat_curvature,
    g_beta,
    validate_table,
)


def test_flat_curvature_values():
    assert flat_curvature(3, 0.0) == 0.0
    assert flat_curvature(3, 1.0) == pytest.approx(6 / 10**1.5, rel=1e-12)
    assert flat_curvature(4, 0.5) == pytest.approx(3 / 1.25**1.5, rel=1e-12)


@given(st.floats(2.01, 10), st.one_of(st.just(0.0), st.floats(1e-30, 2), st.floats(-2, -1e-30)))
def test_flat_curvature_even_and_nonnegative(beta, x):
    k = flat_curvature(beta, x)
    assert k >= 0
    assert k == pytest.approx(flat_curvature(beta, -x), rel=1e-12, abs=0)
    assert (k == 0) == (x == 0)


def test_flat_curvature_rejects_small_beta():
    with pytest.raises(InvalidParams):
        flat_curvature(2.0, 0.3)


def test_g_beta_exact_at_zero():
    assert g_beta(0.0, 3.5) == 1.0
    assert g_beta(-2.0, 2.5) == pytest.approx(1 + 2**2.5)


@pytest.mark.parametrize("kwargs", [dict(beta=2.0), dict(beta=1.5), dict(beta=4, half_width=0.0), dict(beta=4, closure_slack=-1)])
def test_invalid_params(kwargs):
    with pytest.raises(InvalidParams):
        build_table(FlatFamilyParams(**kwargs))


def test_closing_arc_radius():
    center, radius = closing_arc(4.0, 1.0, 0.5)
    assert center == (1.5, 0.0)
    assert radius == pytest.approx(math.sqrt(4.25), abs=1e-12)


def test_unit_half_width_with_small_slack_is_rejected():
    # the arc through (1, 2) centred at (1.5, 0) bends outward at the junction
    with pytest.raises(GeometryError):
        build_table(FlatFamilyParams(4.0, half_width=1.0, closure_slack=0.5))


def test_default_table_components(tables):
    t = tables[4.0]
    assert len(t.components) == 4
    kinds = [c.kind.value for c in t.components]
    assert kinds.count("circular_arc") == 2
    for c in t.components:
        assert c.arclength_end > c.arclength_start
    top = t.r_of(K.TOP, 0.0)
    p = boundary_point(t, top)
    assert p.position == pytest.approx((0.0, 1.0), abs=1e-12)
    assert p.curvature == 0.0


@pytest.mark.parametrize("beta", [3.0, 4.0, 6.0])
def test_validation_default_tables(tables, beta):
    rep = validate_table(tables[beta])
    assert rep.ok
    assert all(0.1 <= a <= math.pi - 0.1 for a in rep.junction_angles)
    assert max(rep.continuity_residuals) < 1e-10
    assert min(rep.min_closing_curvature) > 0


def test_half_variant_floor(half_tables):
    t = half_tables[4.0]
    rep = validate_table(t)
    assert rep.ok
    kinds = [c.kind.value for c in t.components]
    assert "straight_segment" in kinds
    seg = kinds.index("straight_segment")
    mid = 0.5 * (t.components[seg].arclength_start + t.components[seg].arclength_end)
    assert boundary_point(t, mid).curvature == 0.0
    assert boundary_point(t, mid).position[1] == pytest.approx(0.0, abs=1e-14)


def test_near_flat_closure_flagged():
    t = build_table(FlatFamilyParams(4.0, closure_slack=1e4))
    assert validate_table(t).near_flat_closure


def test_out_of_range(tables):
    t = tables[4.0]
    for r in (-1e-9, t.total_length, t.total_length + 1):
        with pytest.raises(OutOfRange):
            boundary_point(t, r)


@pytest.mark.parametrize("beta", [3.0, 4.0, 6.0])
def test_arclength_against_quad(tables, beta):
    t = tables[beta]
    X = t.params.half_width
    for x in np.linspace(-X, X, 9):
        ref, _ = integrate.quad(lambda s: math.sqrt(1 + (beta * abs(s) ** (beta - 1)) ** 2), 0, x, epsabs=1e-13, epsrel=1e-13)
        assert t.arclength_of_x(x) == pytest.approx(ref, abs=1e-11)


@pytest.mark.parametrize("beta", [3.0, 4.0, 6.0])
def test_arclength_round_trip(tables, beta):
    t = tables[beta]
    X = t.params.half_width
    xs = np.random.default_rng(5).uniform(-X, X, 1000)
    err = max(abs(t.x_of_arclength(t.arclength_of_x(x)) - x) for x in xs)
    assert err < 1e-10


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1, exclude_max=True))
def test_boundary_frame_invariants(frac):
    t = build_table(FlatFamilyParams(4.0))
    r = frac * t.total_length
    p = boundary_point(t, r)
    T, N = np.array(p.unit_tangent), np.array(p.unit_inward_normal)
    assert abs(T @ T - 1) < 1e-12 and abs(N @ N - 1) < 1e-12
    assert abs(T @ N) < 1e-12
    assert p.curvature >= 0
    # r -> state -> r round trip
    c, u = t.state_of(r)
    assert t.r_of(c, u) == pytest.approx(r, abs=1e-10)


def test_flat_point_curvature_matches_closed_form(tables):
    t = tables[6.0]
    for x in (0.1, -0.3, 0.7):
        p = boundary_point(t, t.r_of(K.TOP, x))
        assert p.curvature == pytest.approx(flat_curvature(6.0, x), rel=1e-12)


def test_corner_points_on_window_border(tables, window):
    t = tables[4.0]
    for r in t.corner_points(window.epsilon):
        p = boundary_point(t, r)
        assert abs(p.position[0]) == pytest.approx(window.epsilon, abs=1e-10)


def test_table_json_export(tables):
    d = tables[4.0].to_dict()
    for key in ("beta", "half_width", "closure_slack", "variant", "components", "total_length"):
        assert key in d
