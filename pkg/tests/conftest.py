import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in RESULTS:
        tag = "INFO" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"[{tag}] {label}: {detail}")
