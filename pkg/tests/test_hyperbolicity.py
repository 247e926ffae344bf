import math

import numpy as np
import pytest

from flatbilliard import billiard as bm
from flatbilliard import hyperbolicity as hy
from flatbilliard.errors import DomainError, InvalidParams
from flatbilliard.statistics import default_scan_r, separatrix_phi


def test_front_update_values():
    assert float(hy.front_update(0.2, 1.0, 2.0, 1.0)) == pytest.approx(0.2 * 2 + 1 / 3)
    assert float(hy.front_update(0.0, 0.5, 2.0, hy.FrontCurvature(1.0))) == pytest.approx(1 / 3)


@pytest.mark.parametrize("args", [(0.1, 0.0, 1.0, 1.0), (-0.1, 1.0, 1.0, 1.0), (0.1, 1.0, 0.0, 1.0), (0.1, 1.0, 1.0, 0.0)])
def test_front_update_domain(args):
    with pytest.raises(DomainError):
        hy.front_update(*args)


def test_front_curvature_positive():
    with pytest.raises(DomainError):
        hy.FrontCurvature(0.0)
    with pytest.raises(DomainError):
        hy.FrontCurvature(math.inf)


def test_slope_and_pnorm():
    assert hy.unstable_slope(2.0, 0.5, 0.5) == pytest.approx(0.5)
    r = hy.pnorm_ratio(bm.PhasePoint(0.0, math.pi / 3), 1.0)
    assert r == pytest.approx(0.5 / math.sqrt(2))


def test_single_step_product():
    class P:  # only curvature and x are read
        curvature = 0.0
        position = (1.0, 0.0)

    rec = bm.CollisionRecord(bm.PhasePoint(0.0, 0.0), P(), 2.0, False)
    b = hy.expansion_product([rec], B0=1.0)
    assert b.lambda_total == pytest.approx(3.0)
    with pytest.raises(DomainError):
        hy.expansion_product([rec], B0=0.0)


def test_split_index():
    assert hy.split_index(np.array([0.3, 0.2, 0.1, -0.05, -0.2])) == 2
    assert hy.split_index(np.array([0.3, 0.2, 0.15, 0.2, 0.3])) == 2
    assert hy.split_index(np.array([-0.3, -0.1, 0.2])) == 1


@pytest.fixture(scope="module")
def long_excursions(tables, window):
    t = tables[6.0]
    r0 = default_scan_r(t, window)
    phi_inf, _ = separatrix_phi(t, window, r0)
    comp, u = t.state_of(r0)
    out = []
    for d in (1e-5, -1e-5, 1e-8, -1e-8):
        exc = hy.excursion_of_state(t, comp, u, phi_inf + d, window, 100_000)
        assert exc is not None
        out.append(exc)
    return out


def test_excursions_are_long(long_excursions):
    assert min(e.n for e in long_excursions) > 20
    sides = {e.exit_side for e in long_excursions}
    assert sides == {1, -1}


def test_split_product_identity(long_excursions):
    for e in long_excursions:
        b = hy.expansion_of_excursion(e)
        full = np.sum(np.log1p(e.tau * b.B))
        assert b.log_lambda_1 + b.log_lambda_2 == pytest.approx(full, rel=1e-12)
        assert b.lambda_1 * b.lambda_2 == pytest.approx(b.lambda_total, rel=1e-10)
        assert 0 < b.n_prime < b.n


def test_expansion_factors_exceed_one(long_excursions):
    for e in long_excursions:
        b = hy.expansion_of_excursion(e)
        assert np.all(e.tau * b.B > 0)
        assert b.log_lambda_total > 0


def test_unstable_cone_after_first_collision(long_excursions):
    for e in long_excursions:
        b = hy.expansion_of_excursion(e)
        slopes = np.cos(e.phi[1 : e.n]) * b.B[1:] - e.curvature[1 : e.n]
        assert np.all(slopes > 0)


def test_curvature_beats_free_flight(long_excursions):
    # B_m >= 1 / (tau_{m-1} + 1/B_{m-1}) by construction
    for e in long_excursions:
        b = hy.expansion_of_excursion(e)
        lower = 1.0 / (e.tau[:-1] + 1.0 / b.B[:-1])
        assert np.all(b.B[1:] >= lower * (1 - 1e-12))


def test_b0_independence_is_weak(long_excursions):
    e = max(long_excursions, key=lambda e: e.n)
    logs = [hy.expansion_of_excursion(e, B0).log_lambda_total for B0 in hy.B0_SWEEP]
    # the dependence on B0 can never exceed log(B0_max / B0_min)
    assert max(logs) - min(logs) <= math.log(max(hy.B0_SWEEP) / min(hy.B0_SWEEP)) + 1e-9
    assert np.all(np.diff(logs) >= 0)


def test_split_ratio_check_requires_span():
    bd = [hy.ExpansionBreakdown(n, n // 2, 1.0, 0.5) for n in (10, 12, 14)]
    with pytest.raises(InvalidParams):
        hy.split_ratio_check(bd)
    with pytest.raises(InvalidParams):
        hy.split_ratio_check(bd[:2])


def test_split_ratio_check_flat_family():
    ns = [10, 30, 100, 300]
    bd = [hy.ExpansionBreakdown(n, n // 2, math.log(n), 0.0) for n in ns]
    rep = hy.split_ratio_check(bd)
    assert rep.min_ratio == pytest.approx(1.0)
    assert rep.loglog_slope == pytest.approx(0.0, abs=1e-12)
    assert rep.passed
    decaying = [hy.ExpansionBreakdown(n, n // 2, 2 * math.log(n), 0.0) for n in ns]
    assert not hy.split_ratio_check(decaying).passed
