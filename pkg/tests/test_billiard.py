import math

import numpy as np
import pytest

from flatbilliard import _kernel as K
from flatbilliard import billiard as bm
from flatbilliard.errors import GrazingCollision, InvalidParams, OutOfRange
from flatbilliard.geometry import boundary_point


def _wrap(t, a, b):
    d = abs(a - b)
    return min(d, t.total_length - d)


def test_period_two_orbit(tables):
    for t in tables.values():
        top = bm.PhasePoint(t.r_of(K.TOP, 0.0), 0.0)
        Y, tau = bm.step(t, top)
        assert tau == pytest.approx(2.0, abs=1e-12)
        assert boundary_point(t, Y.r).position == pytest.approx((0.0, -1.0), abs=1e-12)
        assert Y.phi == pytest.approx(0.0, abs=1e-12)
        orb = bm.orbit(t, top, 10)
        assert all(abs(rec.tau - 2.0) < 1e-12 for rec in orb)
        ys = [rec.point.position[1] for rec in orb]
        assert ys == pytest.approx([1.0, -1.0] * 5, abs=1e-12)


def test_vertical_chord_off_axis(tables):
    # velocity straight down from (0.5, g(0.5)) on the top curve: phi = atan g'(0.5)
    t = tables[4.0]
    phi = math.atan(4 * 0.5**3)
    Y, tau = bm.step(t, bm.PhasePoint(t.r_of(K.TOP, 0.5), phi))
    assert tau == pytest.approx(2 * (1 + 0.5**4), abs=1e-12)
    assert boundary_point(t, Y.r).position[0] == pytest.approx(0.5, abs=1e-12)


def test_normal_incidence_off_axis_is_not_vertical(tables):
    t = tables[4.0]
    Y, tau = bm.step(t, bm.PhasePoint(t.r_of(K.TOP, 0.5), 0.0))
    assert abs(boundary_point(t, Y.r).position[0] - 0.5) > 1e-3


def test_involution_exact():
    X = bm.PhasePoint(1.234, -0.7)
    assert bm.involution(bm.involution(X)) == X


@pytest.mark.parametrize("beta", [3.0, 4.0, 6.0])
def test_inverse_round_trip(tables, beta):
    t = tables[beta]
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(2000):
        X = bm.sample_mu(t, rng)
        try:
            Y, tau = bm.step(t, X)
            Z, tau_back = bm.step_inverse(t, Y)
        except GrazingCollision:
            continue
        worst = max(worst, _wrap(t, Z.r, X.r), abs(Z.phi - X.phi))
        assert tau_back == pytest.approx(tau, abs=1e-9)
    assert worst < 1e-9


def test_half_table_round_trip(half_tables):
    t = half_tables[4.0]
    rng = np.random.default_rng(12)
    for _ in range(500):
        X = bm.sample_mu(t, rng)
        Y, _ = bm.step(t, X)
        Z, _ = bm.step_inverse(t, Y)
        assert _wrap(t, Z.r, X.r) < 1e-9 and abs(Z.phi - X.phi) < 1e-9


@pytest.mark.parametrize("beta", [3.0, 6.0])
def test_reflection_law(tables, beta):
    t = tables[beta]
    rng = np.random.default_rng(13)
    res = [bm.reflection_residual(t, bm.sample_mu(t, rng)) for _ in range(1000)]
    assert max(res) < 1e-10


def test_orbit_consistency(tables):
    t = tables[6.0]
    X0 = bm.sample_mu(t, np.random.default_rng(3))
    orb = bm.orbit(t, X0, 300)
    pos = np.array([rec.point.position for rec in orb])
    gaps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    taus = np.array([rec.tau for rec in orb])[:-1]
    assert np.max(np.abs(gaps - taus)) < 1e-10
    assert np.all(taus > 0) and np.all(taus < t.diameter)
    # positions lie on the boundary
    for rec in orb:
        assert boundary_point(t, rec.phase.r).position == pytest.approx(rec.point.position, abs=1e-10)


def test_time_reversed_orbit(tables):
    t = tables[4.0]
    X0 = bm.sample_mu(t, np.random.default_rng(8))
    orb = bm.orbit(t, X0, 12)
    end = orb[-1].phase.reversed()
    back = bm.orbit(t, end, 12)
    for a, b in zip(orb.records, reversed(back.records)):
        assert _wrap(t, a.phase.r, b.phase.r) < 1e-8
        assert a.phase.phi == pytest.approx(-b.phase.phi, abs=1e-8)


def test_sample_mu_moments(tables):
    t = tables[4.0]
    cs, us, ps = bm.sample_mu_states(t, np.random.default_rng(1), 1_000_000)
    s, c = np.sin(ps), np.cos(ps)
    assert abs(s.mean()) < 3 * s.std() / 1000
    assert abs(c.mean() - math.pi / 4) < 3 * c.std() / 1000


def test_sample_mu_deterministic(tables):
    t = tables[4.0]
    a = [bm.sample_mu(t, np.random.default_rng(99)) for _ in range(3)]
    b = [bm.sample_mu(t, np.random.default_rng(99)) for _ in range(3)]
    assert a == b


def test_grazing_and_range_errors(tables):
    t = tables[4.0]
    with pytest.raises(GrazingCollision):
        bm.step(t, bm.PhasePoint(1.0, math.pi / 2 - 1e-9))
    with pytest.raises(OutOfRange):
        bm.step(t, bm.PhasePoint(t.total_length + 1, 0.0))
    with pytest.raises(OutOfRange):
        bm.step(t, bm.PhasePoint(0.5, 2.0))


def test_return_time_basics(tables, window):
    t = tables[6.0]
    # straight across from outside the window to outside the window
    X = bm.PhasePoint(t.r_of(K.TOP, 0.6), math.atan(6 * 0.6**5))
    assert bm.return_time(t, window, X) == 1
    with pytest.raises(InvalidParams):
        bm.return_time(t, window, bm.PhasePoint(t.r_of(K.TOP, 0.0), 0.0))


def test_points_entering_window_return_later(tables, window):
    t = tables[6.0]
    # aimed from just outside the window at the opposite flat point
    x0 = 0.45
    r0 = t.r_of(K.LOWER, x0)
    c, u = t.state_of(r0)
    px, py, tx, ty, nx, ny, _ = K.frame(t.geo, c, u)
    d = np.array([0.0 - px, 1.0 - py])
    d /= np.linalg.norm(d)
    phi = math.atan2(d @ [tx, ty], d @ [nx, ny])
    N = bm.return_time(t, window, bm.PhasePoint(r0, phi))
    assert N >= 2


def test_censoring(tables, window):
    from flatbilliard.statistics import separatrix_phi, default_scan_r

    t = tables[6.0]
    r0 = default_scan_r(t, window)
    phi_inf, _ = separatrix_phi(t, window, r0)
    out = bm.return_time(t, window, bm.PhasePoint(r0, phi_inf), n_max=50)
    assert isinstance(out, bm.Censored) and out.n_max == 50


def test_window_spec(tables):
    with pytest.raises(InvalidParams):
        bm.WindowSpec(0.8).check(tables[4.0])
    with pytest.raises(InvalidParams):
        bm.WindowSpec(0.0).check(tables[4.0])


def test_window_measure(tables, window):
    t = tables[4.0]
    f = bm.window_measure_fraction(t, window)
    assert f == pytest.approx(4 * t.arclength_of_x(window.epsilon) / t.total_length)
