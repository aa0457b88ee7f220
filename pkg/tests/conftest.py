import numpy as np
import pytest

from tdmcluster.config import RunConfig


def small_config(**flat) -> RunConfig:
    """A fast configuration: few frames of 1 ms, no artifact files unless asked."""
    base = {"run.n_frames": 4, "run.frame_duration": 1e-3}
    base.update(flat)
    return RunConfig().with_updates(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Record one ``criterion N: PASS|FAIL detail`` line; all lines print at session end."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
