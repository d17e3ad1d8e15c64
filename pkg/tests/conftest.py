import numpy as np
import pytest

from collapse_oracle.model import make_stream

_criteria = {}


@pytest.fixture
def rng():
    return make_stream(20261019)


def random_hermitian(rng, d, scale=1.0):
    x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * (x + x.conj().T) / 2


def random_psi(rng, d):
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion_" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _criteria[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        outcome = "PASS" if _criteria[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{outcome}  {name}")
