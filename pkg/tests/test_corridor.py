import math

import numpy as np
import pytest

from flatbilliard import _kernel as K
from flatbilliard import billiard as bm
from flatbilliard import corridor as cr
from flatbilliard.errors import InvalidParams, NoConvergence, Unclassified


def _step_oracle(beta, x, w):
    # plain fixed-point iteration on the implicit x-update
    xp = x
    for _ in range(500):
        xp = x - math.tan(w) * (2 + abs(x) ** beta + abs(xp) ** beta)
    wp = w - 2 * math.atan(beta * math.copysign(abs(xp) ** (beta - 1), xp))
    return xp, wp


def test_step_matches_fixed_point_oracle():
    s = cr.corridor_step(4, cr.CorridorState(0.1, 0.01))
    assert s.x == pytest.approx(0.07999792370219938, abs=1e-14)
    xo, wo = _step_oracle(4, 0.1, 0.01)
    assert s.x == pytest.approx(xo, abs=1e-15)
    assert s.w == pytest.approx(wo, abs=1e-15)
    assert s.m == 1


@pytest.mark.parametrize("beta", [3.0, 4.0, 6.0])
def test_step_random_states(beta):
    rng = np.random.default_rng(5)
    for x, w in zip(rng.uniform(-0.4, 0.4, 50), rng.uniform(-0.05, 0.05, 50)):
        s = cr.corridor_step(beta, cr.CorridorState(x, w))
        xo, wo = _step_oracle(beta, x, w)
        assert s.x == pytest.approx(xo, abs=1e-13)
        assert s.w == pytest.approx(wo, abs=1e-13)


def test_zero_angle_keeps_position():
    s = cr.corridor_step(6, cr.CorridorState(0.2, 0.0))
    assert s.x == 0.2
    assert s.w == pytest.approx(-2 * math.atan(6 * 0.2**5))


def test_bad_angle_raises():
    with pytest.raises(NoConvergence):
        cr.corridor_step(4, cr.CorridorState(0.1, math.pi / 2))


def test_left_window():
    assert cr.left_window(cr.CorridorState(-0.5, 0.0), 0.4)
    assert not cr.left_window(cr.CorridorState(0.3, 0.0), 0.4)


@pytest.mark.parametrize("beta", [4.0, 6.0])
def test_step_agrees_with_geometric_map(tables, beta):
    t = tables[beta]
    for x, w in [(0.3, 0.02), (0.1, 0.003), (-0.25, -0.01)]:
        comp, u, phi = cr.phase_of_corridor(t, x, w, on_top=False)
        Y, _ = bm.step(t, bm.PhasePoint(t.r_of(comp, u), phi))
        c2, u2 = t.state_of(Y.r)
        assert c2 == K.TOP
        xg, wg = cr.corridor_of_phase(t, c2, u2, Y.phi)
        s = cr.corridor_step(beta, cr.CorridorState(x, w))
        assert xg == pytest.approx(s.x, abs=1e-11)
        assert wg == pytest.approx(s.w, abs=1e-11)


def test_phase_round_trip(tables):
    t = tables[6.0]
    for on_top in (True, False):
        comp, u, phi = cr.phase_of_corridor(t, 0.17, 0.004, on_top)
        assert cr.corridor_of_phase(t, comp, u, phi) == pytest.approx((0.17, 0.004), abs=1e-15)


def test_classification_monotone_in_angle():
    ws = np.linspace(0.0, 0.05, 101)
    c = [cr.classify(6, 0.3, w) for w in ws]
    signs = [1 if e is cr.ExitType.PASS_THROUGH else -1 for e in c if e is not cr.ExitType.CONVERGED]
    assert signs[0] == -1 and signs[-1] == 1
    assert np.all(np.diff(signs) >= 0)


@pytest.mark.parametrize("beta", [3.0, 4.0, 6.0])
def test_separatrix_brackets(beta):
    ws = cr.locate_stable_manifold(beta, 0.3)
    assert 0 < ws < 0.8
    assert cr.classify(beta, 0.3, ws * (1 - 1e-6)) is cr.ExitType.TURN_BACK
    assert cr.classify(beta, 0.3, ws * (1 + 1e-6)) is cr.ExitType.PASS_THROUGH


def test_separatrix_increases_with_x0():
    ws = [cr.locate_stable_manifold(4, x) for x in (0.1, 0.2, 0.3, 0.4)]
    assert np.all(np.diff(ws) > 0)


def test_separatrix_trace_is_long():
    ws = cr.locate_stable_manifold(6, 0.4)
    tr = cr.corridor_trace(6, 0.4, ws + 1e-14, 0.4, m_max=1_000_000)
    assert tr.exit_type is cr.ExitType.PASS_THROUGH
    assert tr.n > 1000


def test_locate_invalid_x0():
    with pytest.raises(InvalidParams):
        cr.locate_stable_manifold(4, -0.1)


def test_locate_unclassified_with_tiny_budget():
    with pytest.raises(Unclassified):
        cr.locate_stable_manifold(6, 0.4, m_max=1, w_hi=1e-9)


def test_trace_invalid_exit():
    with pytest.raises(InvalidParams):
        cr.corridor_trace(4, 0.3, 0.01, 0.0)


def test_trace_indices_and_rows():
    ws = cr.locate_stable_manifold(4, 0.4)
    tr = cr.corridor_trace(4, 0.4, ws + 1e-10, 0.4)
    assert tr.exit_type is cr.ExitType.PASS_THROUGH
    npr, ndp = tr.n_prime, tr.n_dprime
    assert tr.x[npr] > 0 > tr.x[npr + 1]
    assert 1 <= ndp <= npr
    assert tr.w[ndp] < 2 * tr.w[npr]
    assert np.all(tr.w[1:ndp] >= 2 * tr.w[npr])
    rows = list(tr.to_rows())
    assert len(rows) == tr.n + 1
    m, x, w, z, Z, q = rows[5]
    assert z * Z == pytest.approx(1.0)
    assert q == pytest.approx(w * w - 2 * x**4)


def test_turn_back_index():
    ws = cr.locate_stable_manifold(4, 0.4)
    tr = cr.corridor_trace(4, 0.4, ws - 1e-10, 0.4)
    assert tr.exit_type is cr.ExitType.TURN_BACK
    assert tr.n_dprime is None
    assert tr.x[tr.n_prime] == tr.x.min()


def test_q_increments_match_direct_difference():
    tr = cr.corridor_trace(4, 0.4, 0.03, 0.4)
    inc = tr.q_increments()[:5]
    direct = np.diff(tr.q())[:5]
    assert inc == pytest.approx(direct, rel=1e-8, abs=1e-15)


@pytest.mark.parametrize("beta", [3.0, 4.0, 6.0])
def test_lemma_checks_along_separatrix(beta):
    fam = cr.separatrix_family(beta, 0.4, 0.4, [1e-6, 1e-9, 1e-12])
    for tr in fam:
        rep = cr.lemma_diagnostics(tr)
        assert rep.monotone_violations == 0
        if rep.difference_ratio is not None:
            lo, hi = rep.difference_ratio
            assert lo >= 1.0 and hi <= 2.0 + 1e-9
        d = rep.to_dict()
        assert set(d) == {"monotonicity", "wsq_over_xbeta", "difference_ratio", "z_increments", "x_over_linear", "exponents"}


def test_lemma_needs_pass_through():
    ws = cr.locate_stable_manifold(4, 0.4)
    tr = cr.corridor_trace(4, 0.4, ws - 1e-8, 0.4)
    with pytest.raises(InvalidParams):
        cr.lemma_diagnostics(tr)


def test_w_nprime_exponent_needs_points():
    with pytest.raises(InvalidParams):
        cr.w_nprime_exponent([], (1, 10))
