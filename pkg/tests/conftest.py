import pytest

from flatbilliard.billiard import WindowSpec
from flatbilliard.geometry import FlatFamilyParams, build_table


@pytest.fixture(scope="session")
def tables():
    return {b: build_table(FlatFamilyParams(b)) for b in (3.0, 4.0, 6.0)}


@pytest.fixture(scope="session")
def half_tables():
    return {b: build_table(FlatFamilyParams(b, variant="half")) for b in (3.0, 4.0, 6.0)}


@pytest.fixture(scope="session")
def window():
    return WindowSpec(0.4)
