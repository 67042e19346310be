import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_walk(rng, t_len, scale=1.0):
    return np.cumsum(scale * rng.standard_normal(t_len))


def report(criterion: str, ok: bool, detail: str) -> None:
    """Record one acceptance line; shown in the terminal summary and on stdout."""
    line = f"[{criterion}] {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
