import numpy as np
import pytest

from pufauth.enrollment import enroll
from pufauth.puf_model import TokenDisorder


@pytest.fixture(scope="session")
def token_pair():
    rng = np.random.default_rng(2024)
    return TokenDisorder.random(rng), TokenDisorder.random(rng)


@pytest.fixture(scope="session")
def enrolled(token_pair):
    """Enrollment at n = 128 with 40 rows; tests must copy the database before consuming."""
    ta, tb = token_pair
    return enroll(ta, tb, 40, n=128, rng_seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
