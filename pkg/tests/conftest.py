import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


ACCEPTANCE_KEY = "acceptance_lines"


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one summary line per acceptance criterion for the terminal report."""
    return request.config.__dict__.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get(ACCEPTANCE_KEY)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
