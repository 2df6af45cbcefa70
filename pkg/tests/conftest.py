import pytest


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line (plus optional detail lines) for an acceptance criterion."""
    lines = request.config._acceptance_lines

    def record(criterion, passed, summary, details=()):
        lines.append(f"{criterion:<4s} {'PASS' if passed else 'FAIL'}  {summary}")
        lines.extend(f"        {d}" for d in details)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
