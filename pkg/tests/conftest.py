import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from collabinf.profiles import DeviceProfile

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_profile(tf_last=0.1, B=1, payload=1e6, name="test") -> DeviceProfile:
    """Tiny profile with ``B`` interior points and full-local latency ``tf_last``."""
    n = B + 2
    tf = [0.0] + [tf_last * (i + 1) / (B + 1) for i in range(B + 1)]
    tc = [0.0] + [0.001] * B + [0.0]
    ef = [0.0] + [0.2 * (i + 1) / (B + 1) for i in range(B + 1)]
    ec = [0.0] + [0.002] * B + [0.0]
    f = [payload / (i + 1) for i in range(B + 1)] + [0.0]
    assert len(tf) == n
    return DeviceProfile(B, tuple(tf), tuple(tc), tuple(ef), tuple(ec), tuple(f), name)


@pytest.fixture
def tiny_profile():
    return make_profile()


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(config.acceptance_lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request, capsys):
    """Print and record one PASS/FAIL line per acceptance criterion, then assert it."""

    def emit(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        request.config.acceptance_lines.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return emit
