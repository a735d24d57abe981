import pytest
from hypothesis import HealthCheck, settings

from ppoisson.exponents import validate_context

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ctx_sub():
    return validate_context(3, 2, 1.2)


@pytest.fixture(scope="session")
def ctx_crit():
    return validate_context(3, 2, 1.5)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
