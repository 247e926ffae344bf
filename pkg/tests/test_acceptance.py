"""Every acceptance criterion at full size and its stated tolerance.

Each test prints one PASS/FAIL line.  The return-tail Monte Carlo (1e8
samples) is shared by criteria 5, 6 and 9; the module takes several minutes.
Run with ``pytest -s tests/test_acceptance.py`` to see the lines live.
"""

import os

import pytest

from flatbilliard import acceptance as acc

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def ctx():
    return acc.Context(beta=6.0, epsilon=0.4, seed=2024, workers=min(os.cpu_count() or 1, 8))


@pytest.mark.parametrize("number", sorted(acc.CRITERIA))
def test_criterion(ctx, number):
    r = acc.run_criterion(number, ctx)
    print(r.line())
    assert r.passed, r.line()
