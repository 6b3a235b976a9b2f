import numpy as np
import pytest

from polycycle.builder import PolycycleSpec, build_main3_family, build_polycycle
from polycycle.graphic import delta_max
from polycycle.melnikov import melnikov_matrix

CASCADE_RATIOS = (2.0, 1.0 / 3.0, 4.0)


@pytest.fixture(scope="session")
def cascade():
    """The (2, 1/3, 4) triangle with its Main3 family, Melnikov matrix and plan."""
    b = build_polycycle(PolycycleSpec(3, CASCADE_RATIOS))
    fam = build_main3_family(b)
    _, plan = delta_max(b.ratios)
    return {"built": b, "family": fam, "melnikov": melnikov_matrix(fam, b), "plan": plan}


@pytest.fixture(scope="session")
def stable_triangle():
    return build_polycycle(PolycycleSpec(3, (2.0, 2.0, 2.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def closed(poly):
    poly = np.asarray(poly, dtype=float)
    return np.vstack([poly, poly[:1]])


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
