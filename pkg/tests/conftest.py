import numpy as np
import pytest

from evabid.fleet import ChargingSession


def make_session(ev_id="ev", plug_in=0, plug_out=10, required=10.0, capacity=100.0, initial=20.0,
                 p_max=50.0, p_min=0.0, floor=None):
    return ChargingSession(ev_id, plug_in, plug_out, required, capacity, initial, p_max, p_min,
                           initial if floor is None else floor)


def random_decreasing(rng, m, scale=100.0):
    return np.sort(rng.uniform(0.0, scale, m))[::-1].copy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"CRITERION {number} {'PASS' if ok else 'FAIL'}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
