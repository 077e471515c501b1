import numpy as np
import pytest

from rbm_missing.core import RbmParams

# lines recorded by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture
def small_model(rng):
    return RbmParams.random(5, 4, rng, scale=1.0)


def random_incomplete(rng, N, n, p):
    """N random binary rows with each entry missing with probability p."""
    from rbm_missing.dataset import apply_mask

    data = (rng.random((N, n)) < 0.5).astype(np.uint8)
    return apply_mask(data, p, rng)
