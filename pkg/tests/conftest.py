import numpy as np
import pytest

from hessbundle.bundle import random_metric
from hessbundle.geometry import Background


@pytest.fixture(scope="session")
def bg8():
    return Background(2, 8, 2, 1)


@pytest.fixture(scope="session")
def bg16():
    return Background(2, 16, 2, 1)


@pytest.fixture(scope="session")
def metric16(bg16):
    return random_metric(bg16, 0, 0.3, 1)


@pytest.fixture(scope="session")
def metric16b(bg16):
    return random_metric(bg16, 1, 0.3, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def hermitian_batch(rng, shape, r, scale=1.0):
    a = rng.standard_normal(shape + (r, r)) + 1j * rng.standard_normal(shape + (r, r))
    return scale * 0.5 * (a + np.swapaxes(a.conj(), -1, -2))


def positive_batch(rng, shape, r):
    a = rng.standard_normal(shape + (r, r)) + 1j * rng.standard_normal(shape + (r, r))
    return a @ np.swapaxes(a.conj(), -1, -2) + 0.1 * np.eye(r)


# acceptance bookkeeping: criterion -> list of (label, passed, detail)
ACCEPTANCE: dict = {}


def record(criterion, label, passed, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[criterion]
        ok = all(p for _, p, _ in parts)
        body = "; ".join(f"{label}: {'pass' if p else 'FAIL'}{' (' + d + ')' if d else ''}" for label, p, d in parts)
        tr.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {body}")
