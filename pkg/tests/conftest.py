import re
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def central_diff(f, x, h=1e-6):
    """Jacobian of ``f`` at the flat vector ``x`` by central differences."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    J = np.zeros(f0.shape + (x.size,))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        J[..., i] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return J


def rel_err(A, B):
    A, B = np.asarray(A, float), np.asarray(B, float)
    return float(np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-12))


def random_rotation(rng):
    from scipy.spatial.transform import Rotation

    return Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------- acceptance summary

SUITE_BUDGET_S = 120.0
_CRITERIA: dict[int, tuple[str, str]] = {}
_START = time.perf_counter()


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    if report.when == "call" or (report.failed and key not in _CRITERIA):
        _CRITERIA[key] = (m.group(2).replace("_", " "), "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    elapsed = time.perf_counter() - _START
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        name, outcome = _CRITERIA[key]
        if key == 7:
            ok = outcome == "PASS" and elapsed < SUITE_BUDGET_S
            outcome = f"{'PASS' if ok else 'FAIL'} (session {elapsed:.1f}s, budget {SUITE_BUDGET_S:.0f}s)"
        terminalreporter.write_line(f"criterion {key} {name}: {outcome}")
