import numpy as np
import pytest


def random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_density(rng, dim, rank=None):
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::test_criterion_")[1]
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or report.failed:
        prev = _ACCEPTANCE.get(name, ("PASS", ""))
        status = "FAIL" if report.failed or prev[0] == "FAIL" else "PASS"
        _ACCEPTANCE[name] = (status, detail or prev[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{status} criterion {name}" + (f"  [{detail}]" if detail else ""))
