import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ci")

@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def acceptance_log(request):
    """Collects one summary line per acceptance criterion for the terminal report."""
    if not hasattr(request.config, "_acceptance_lines"):
        request.config._acceptance_lines = []
    return request.config._acceptance_lines


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
    failed = sum(line.startswith("[FAIL]") for _, line in lines)
    terminalreporter.write_line(f"{len(lines) - failed}/{len(lines)} criteria passed")
