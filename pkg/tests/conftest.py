import numpy as np
import pytest

from nettopo.topology import random_digraph, scale_to_asymptotic, weights_laplacian


@pytest.fixture
def w_marginal():
    return weights_laplacian(random_digraph(8, 0.4, 11))


@pytest.fixture
def w_stable(w_marginal):
    return scale_to_asymptotic(w_marginal, 0.9)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Print a PASS/FAIL line for one criterion, keep it for the summary, then assert."""

    def report(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        assert ok, f"{label}: {detail}"

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1][2:])):
            terminalreporter.write_line(line)
