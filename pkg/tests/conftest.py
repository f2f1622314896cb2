import pytest
from hypothesis import HealthCheck, settings

from apsm.world import DeviceWorld

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture
def world() -> DeviceWorld:
    return DeviceWorld.fresh(seed=7)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def criterion(request, capsys):
    """Record one acceptance verdict line; returns whether it passed."""
    def report(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
        request.config.stash[ACCEPTANCE].append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
