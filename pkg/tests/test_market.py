import numpy as np
import pytest

from evabid.bidding import BidCurve
from evabid.market import (
    InvalidCurveError, SettlementRecord, clear, read_settlements, settle, settle_power,
    write_settlements,
)


def _curve(rng, nc, nd):
    qc = np.cumsum(rng.uniform(0.1, 5, nc))
    pc = 50 - np.cumsum(rng.uniform(0.1, 5, nc))
    qd = -np.cumsum(rng.uniform(0.1, 5, nd))
    pd = 55 + np.cumsum(rng.uniform(0.1, 5, nd))
    return BidCurve(0, tuple(zip(qc, pc)), tuple(zip(qd, pd)))


CURVE = BidCurve(0, ((2.0, 40.0), (4.0, 35.0), (6.0, 30.0)), ((-2.0, 60.0), (-5.0, 70.0)))


def test_clear_examples():
    assert clear(CURVE, 33.0).cleared_charge == 4.0
    r = clear(CURVE, 50.0)
    assert (r.cleared_charge, r.cleared_discharge) == (0.0, 0.0)
    assert clear(CURVE, 35.0).cleared_charge == 4.0
    assert clear(CURVE, 60.0).cleared_discharge == -2.0
    assert clear(CURVE, 1e3).cleared_discharge == -5.0


def test_clear_rejects_invalid():
    with pytest.raises(InvalidCurveError):
        clear(BidCurve(0, ((1.0, 30.0), (2.0, 31.0))), 10.0)


def test_settle_examples():
    r = settle_power(0, 33.0, 4000.0, 0.0, 10.0, 1 / 12)
    assert r.energy_cost == pytest.approx(11.0)
    r = settle_power(0, 60.0, 0.0, -2000.0, 10.0, 1 / 12)
    assert r.energy_cost == pytest.approx(-10.0)
    assert r.degradation_cost == pytest.approx(1.6667, abs=1e-4)
    assert r.total == pytest.approx(-8.3333, abs=1e-4)
    idle = settle(clear(CURVE, 50.0), 10.0, 1 / 12)
    assert (idle.energy_cost, idle.degradation_cost, idle.total) == (0.0, 0.0, 0.0)


def test_clear_monotone_and_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        c = _curve(rng, int(rng.integers(0, 6)), int(rng.integers(0, 6)))
        prices = np.sort(rng.uniform(20, 90, 30))
        prev_c, prev_d = np.inf, 0.0
        for pi in prices:
            r = clear(c, pi)
            assert r.cleared_charge == max([q for q, p in c.charge if p >= pi], default=0.0)
            assert r.cleared_discharge == min([q for q, p in c.discharge if p <= pi], default=0.0)
            assert r.cleared_charge <= prev_c and r.cleared_discharge <= prev_d
            assert r.cleared_charge * r.cleared_discharge == 0.0
            prev_c, prev_d = r.cleared_charge, r.cleared_discharge


def test_settle_linear():
    a = settle_power(0, 42.0, 0.0, -30.0, 10.0, 1 / 12)
    b = settle_power(0, 42.0, 0.0, -90.0, 10.0, 1 / 12)
    assert b.energy_cost == pytest.approx(3 * a.energy_cost)
    assert b.degradation_cost == pytest.approx(3 * a.degradation_cost)


def test_settlement_roundtrip(tmp_path):
    rs = [SettlementRecord(0, 33.0, 4.0, 0.0, 0.011, 0.0), SettlementRecord(1, 60.0, 0.0, -2.0, -0.01, 0.00166)]
    write_settlements(tmp_path / "s.csv", rs)
    assert read_settlements(tmp_path / "s.csv") == rs
