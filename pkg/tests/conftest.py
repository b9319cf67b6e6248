import numpy as np
import pytest

from dipper import fixtures

#: criterion -> list of (ok, detail); filled by the acceptance tests.
ACCEPTANCE: dict[int, list] = {}


def record(criterion: int, ok: bool, detail: str):
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[c]
        ok = all(k for k, _ in checks)
        details = "; ".join(d for _, d in checks)
        terminalreporter.write_line(f"criterion {c:2d}: {'PASS' if ok else 'FAIL'}  {details}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def samples():
    return fixtures.SAMPLES
