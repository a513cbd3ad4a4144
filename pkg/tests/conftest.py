import contextlib
import time

import pytest


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Context manager recording one PASS/FAIL line per acceptance criterion."""
    lines = request.config._acceptance_lines

    @contextlib.contextmanager
    def run(number, title):
        info = {}
        start = time.perf_counter()
        try:
            yield info
        except BaseException as exc:
            line = f"FAIL criterion {number}: {title} ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
            lines.append(line)
            print(line)
            raise
        took = time.perf_counter() - start
        detail = "; ".join(f"{k}={v}" for k, v in info.items())
        line = f"PASS criterion {number}: {title} [{detail}; {took:.1f}s]"
        lines.append(line)
        print(line)

    return run


def pytest_terminal_summary(terminalreporter, config):
    lines = config._acceptance_lines
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
