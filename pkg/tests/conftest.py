import numpy as np
import pytest
from scipy import stats

from rbbchaos import RandomStream


@pytest.fixture
def rng():
    return RandomStream(20240611)


def chi_square_p(observed, probs, min_expected=5.0):
    """Chi-square goodness-of-fit p-value, merging sparse trailing cells."""
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(probs, dtype=float) * observed.sum()
    while expected.size > 2 and expected[-1] < min_expected:
        expected[-2] += expected[-1]
        observed[-2] += observed[-1]
        expected, observed = expected[:-1], observed[:-1]
    return stats.chisquare(observed, expected * observed.sum() / expected.sum()).pvalue


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
