import warnings

import numpy as np
import pytest
from scipy import integrate

from evabid.bidding import (
    EPS_TIE, BidCurve, ClampWarning, InfeasibleStateError, build_bid_curve, feasible_transitions,
    marginal_charge_price, marginal_discharge_price, segment_averages, validate, write_bids,
)
from evabid.fleet import FleetEnvelope
from evabid.valuation import EnergyGrid, ValueTable

from conftest import random_decreasing

DT = 1.0 / 12.0
ETA = 0.93


def _env(p_plus=120.0, p_minus=0.0, e_plus=100.0, e_minus=0.0, n=3):
    return FleetEnvelope(DT, np.full(n, e_plus), np.full(n, e_minus), np.full(n, p_plus),
                         np.full(n, p_minus), 0.0)


def _table(row, lo=0.0, hi=100.0, T=3):
    g = EnergyGrid(lo, hi, len(row))
    return ValueTable(g, np.tile(row, (T, 1)))


def test_feasible_transitions_examples():
    tr = feasible_transitions(50.0, _env(), 1, ETA)
    assert tr.e_max == pytest.approx(59.3)
    assert tr.p_max == pytest.approx(120.0)
    tr = feasible_transitions(100.0, _env(), 1, ETA)
    assert tr.e_max == 100.0 and tr.p_max == 0.0
    tr = feasible_transitions(40.0, _env(0.0, 0.0), 1, ETA)
    assert tr.e_min == tr.e_max == 40.0


def test_infeasible_state():
    with pytest.raises(InfeasibleStateError):
        feasible_transitions(10.0, _env(12.0, 0.0, 100.0, 50.0), 0, ETA)


def test_marginal_prices():
    assert marginal_charge_price(50.0, ETA) == pytest.approx(46.5)
    assert marginal_charge_price(0.0, ETA) == 0.0
    assert marginal_charge_price(1e4, 1.0) == 1e4
    assert marginal_discharge_price(46.5, ETA, 10.0) == pytest.approx(60.0)
    assert marginal_discharge_price(0.0, ETA, 10.0) == 10.0
    assert marginal_discharge_price(33.0, 1.0, 0.0) == 33.0


def test_bid_curve_segments():
    row = np.linspace(80.0, 20.0, 101)
    c = build_bid_curve(_table(row), 1, 50.0, _env(), 5, ETA, 10.0)
    q = [s[0] for s in c.charge]
    np.testing.assert_allclose(q, [24, 48, 72, 96, 120])
    # Delta e = 9.3 / 5 = 1.86; linear row so segment means are midpoint values
    mids = 50.0 + 1.86 * (np.arange(5) + 0.5)
    ref = ETA * np.interp(mids, np.linspace(0, 100, 101), row) - EPS_TIE * np.arange(1, 6)
    np.testing.assert_allclose([s[1] for s in c.charge], ref, rtol=0, atol=1e-9)
    assert c.discharge == ()
    assert validate(c)


def test_flat_table_tie_break():
    c = build_bid_curve(_table(np.full(101, 30.0)), 0, 20.0, _env(120.0, -120.0), 4, ETA, 10.0)
    np.testing.assert_allclose([p for _, p in c.charge], ETA * 30.0 - EPS_TIE * np.arange(1, 5), atol=1e-12)
    np.testing.assert_allclose([p for _, p in c.discharge], 10.0 + 30.0 / ETA + EPS_TIE * np.arange(1, 5),
                               atol=1e-12)
    assert validate(c)


def test_single_step_is_mean():
    rng = np.random.default_rng(0)
    row = random_decreasing(rng, 101, 90.0)
    c = build_bid_curve(_table(row), 2, 33.3, _env(), 1, ETA, 10.0)
    (q, p), = c.charge
    e_max = 33.3 + 120.0 * DT * ETA
    mean, _ = integrate.quad(lambda x: np.interp(x, np.linspace(0, 100, 101), row), 33.3, e_max,
                             points=np.arange(34.0, 43.0), limit=200, epsabs=1e-13)
    assert q == pytest.approx(120.0)
    assert p + EPS_TIE == pytest.approx(ETA * mean / (e_max - 33.3), abs=1e-9)


def test_segment_average_quadrature():
    rng = np.random.default_rng(1)
    g = EnergyGrid(-10.0, 50.0, 61)
    row = random_decreasing(rng, 61)
    for a, b in [(-10.0, -9.5), (0.3, 7.77), (12.0, 49.999), (-12.0, 3.0), (45.0, 55.0)]:
        f = lambda x: (row[0] if x < g.lo else row[-1] if x > g.hi else np.interp(x, g.points, row))
        ref, _ = integrate.quad(f, a, b, limit=400, epsabs=1e-13, points=g.points[(g.points > a) & (g.points < b)][:50])
        assert segment_averages(row, g, np.array([a]), np.array([b]))[0] == pytest.approx(ref / (b - a), abs=1e-9)


def test_monotone_pre_tie_break_prices():
    rng = np.random.default_rng(2)
    row = random_decreasing(rng, 201, 100.0)
    t = _table(row)
    c = build_bid_curve(t, 0, 50.0, _env(300.0, -300.0), 20, ETA, 10.0)
    pc = np.array([p for _, p in c.charge]) + EPS_TIE * np.arange(1, 21)
    pd = np.array([p for _, p in c.discharge]) - EPS_TIE * np.arange(1, 21)
    assert np.all(np.diff(pc) <= 1e-12)
    assert np.all(np.diff(pd) >= -1e-12)


def test_shrinking_power_shrinks_quantity():
    row = np.linspace(80.0, 20.0, 101)
    prev = np.inf
    for pp in (300.0, 200.0, 120.0, 50.0, 10.0, 0.0):
        c = build_bid_curve(_table(row), 1, 50.0, _env(pp), 5, ETA, 10.0)
        top = c.charge[-1][0] if c.charge else 0.0
        assert top <= prev
        prev = top


def test_random_states_pass_validation():
    rng = np.random.default_rng(3)
    for _ in range(500):
        row = random_decreasing(rng, 51, 200.0)
        env = _env(float(rng.uniform(0, 400)), -float(rng.uniform(0, 400)),
                   float(rng.uniform(60, 100)), float(rng.uniform(0, 40)))
        e = float(rng.uniform(env.E_minus[0], env.E_plus[0]))
        c = build_bid_curve(_table(row), 1, e, env, int(rng.integers(1, 12)), ETA, 10.0)
        assert validate(c, env.P_plus[1], env.P_minus[1]), validate(c)


def test_clamped_state_warns():
    env = _env(12.0, -12.0, 100.0, 50.0)
    with pytest.warns(ClampWarning):
        c = build_bid_curve(_table(np.full(101, 30.0)), 0, 10.0, env, 3, ETA, 10.0)
    assert c.meta["clamped"]
    assert c.charge and c.charge[-1][0] == pytest.approx(12.0)


def test_validate_examples():
    ok = BidCurve(0, ((1, 40.0), (2, 35.0)), ((-1, 60.0), (-2, 70.0)))
    assert validate(ok)
    tie = BidCurve(0, ((1, 40.0), (2, 40.0)))
    v = validate(tie)
    assert not v and v.indices == (0, 1)
    cross = BidCurve(0, ((1, 65.0),), ((-1, 60.0),))
    v = validate(cross)
    assert not v and "discharge" in v.message


def test_write_bids(tmp_path):
    c = BidCurve(7, ((1.5, 40.0),), ((-2.0, 60.0),))
    write_bids(tmp_path / "b.csv", [c])
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines == ["interval,side,step,quantity_kw,price_usd_per_mwh",
                     "7,charge,1,1.500000,40.000000", "7,discharge,1,-2.000000,60.000000"]
