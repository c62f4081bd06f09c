from pathlib import Path

import numpy as np
import pytest

from evabid.benchmarks import oracle_dp, oracle_nested_risk, random_instance, richardson_check, run_b1, run_b2, run_b3
from evabid.benchmarks.baselines import ScheduleError, plan_session
from evabid.benchmarks.oracle import OracleInstance, _correct, _stage_values, read_fixture, train_on_instance
from evabid.price_model import DiscretePriceLaw
from evabid.valuation import RiskSpec

from conftest import make_session

DATA = Path(__file__).parent / "data"
DT = 1 / 12


def _fleet(rng, n=8, T=48, v2g=False):
    out = []
    for i in range(n):
        a = int(rng.integers(0, T // 2))
        b = int(rng.integers(a + 6, T + 1))
        req = float(rng.uniform(0, 0.93 * 20 * (b - a) * DT))
        out.append(make_session(f"e{i}", a, b, req, 100.0, 30.0, 20.0, -20.0 if v2g else 0.0,
                                10.0 if v2g else 30.0))
    return out


# --- B1 ----------------------------------------------------------------------

def test_b1_flat_price():
    s = make_session(plug_out=200, required=35.0, initial=0.0, capacity=100.0, p_max=11.0)
    r = run_b1([s], np.full(200, 50.0), eta=0.93)
    assert r.total_cost == pytest.approx(50 * 35 / 0.93 / 1000, rel=1e-12)
    assert r.total_cost == pytest.approx(1.882, abs=5e-4)


def test_b1_zero_demand_and_linearity():
    rng = np.random.default_rng(0)
    ss = _fleet(rng)
    assert run_b1([make_session(required=0.0)], np.full(12, 40.0)).total_cost == 0.0
    pr = rng.uniform(10, 80, 48)
    assert run_b1(ss, 2 * pr).total_cost == pytest.approx(2 * run_b1(ss, pr).total_cost)


def test_b1_charges_from_arrival():
    s = make_session(plug_in=2, plug_out=10, required=0.93 * 50 * DT * 2.5)
    r = run_b1([s], np.full(10, 30.0))
    np.testing.assert_allclose(r.charge, [0, 0, 50, 50, 25, 0, 0, 0, 0, 0])


# --- B2 / B3 -----------------------------------------------------------------

def test_b2_two_slot_argmin():
    s = make_session(plug_out=2, required=0.93 * 50 * DT)
    r = run_b2([s], np.array([60.0, 20.0]))
    np.testing.assert_allclose(r.charge, [0.0, 50.0], atol=1e-7)


def test_b2_v2g_cycle():
    s = make_session(plug_out=2, required=0.0, capacity=20.0, initial=10.0, p_max=12.0, p_min=-12.0, floor=0.0)
    r = run_b2([s], np.array([20.0, 80.0]), eta=1.0, pi_deg=10.0)
    # one kWh bought at 20 and sold at 80 less 10 degradation
    assert r.total_cost == pytest.approx(-(80 - 10 - 20) / 1000, abs=1e-9)
    r = run_b2([s], np.array([20.0, 30.0]), eta=0.93, pi_deg=10.0)
    assert r.total_cost == pytest.approx(0.0, abs=1e-9)
    assert np.all(r.discharge > -1e-7)


def test_b2_constant_prices_never_discharge():
    rng = np.random.default_rng(1)
    r = run_b2(_fleet(rng, v2g=True), np.full(48, 42.0))
    assert np.all(r.discharge > -1e-6)


def test_b3_same_information_equals_b2():
    rng = np.random.default_rng(2)
    ss = _fleet(rng, v2g=True)
    pr = rng.uniform(0, 90, 48)
    assert run_b3(ss, pr, pr).total_cost == pytest.approx(run_b2(ss, pr).total_cost, abs=1e-9)


def test_b3_anticorrelated_not_better():
    rng = np.random.default_rng(3)
    ss = _fleet(rng, v2g=True)
    pr = 45 + 30 * np.sin(np.arange(48) / 4)
    assert run_b3(ss, 90 - pr, pr).total_cost >= run_b2(ss, pr).total_cost - 1e-9


def test_b3_flat_day_ahead_takes_earliest_slots():
    s = make_session(plug_in=1, plug_out=6, required=2 * 0.93 * 50 * DT)
    r = run_b3([s], np.full(6, 30.0), np.arange(6.0))
    np.testing.assert_allclose(r.charge, [0, 50, 50, 0, 0, 0], atol=1e-6)


def test_b2_dominates_b1_and_b3():
    rng = np.random.default_rng(4)
    for _ in range(5):
        ss = _fleet(rng, 10, v2g=bool(rng.integers(2)))
        pr = rng.uniform(-10, 120, 48)
        da = pr + rng.normal(0, 15, 48)
        b2 = run_b2(ss, pr).total_cost
        assert b2 <= run_b1(ss, pr).total_cost + 1e-9
        assert b2 <= run_b3(ss, da, pr).total_cost + 1e-9


def test_plan_respects_limits():
    rng = np.random.default_rng(5)
    for s in _fleet(rng, 6, v2g=True):
        n = s.plug_out - s.plug_in
        pc, pd = plan_session(s, rng.uniform(0, 90, n), 0.93, 10.0, DT)
        e = s.initial_energy + np.cumsum(pc * 0.93 * DT + pd * DT / 0.93)
        assert e[-1] == pytest.approx(s.target_energy, abs=1e-6)
        assert np.all(e <= s.battery_capacity + 1e-6) and np.all(e >= s.min_energy - 1e-6)


def test_plan_infeasible():
    s = make_session(plug_out=1, required=50.0)
    with pytest.raises(ScheduleError):
        plan_session(s, [30.0], 0.93, 10.0, DT)


# --- oracle -------------------------------------------------------------------

def test_oracle_single_slot_is_corrected_terminal():
    inst = random_instance(np.random.default_rng(6), T=1, M=20)
    V = oracle_dp(inst).values[0]
    y = inst.delta * np.arange(inst.M + 1)
    ref = _correct(-inst.chi * np.maximum(inst.need * inst.delta - y, 0.0), inst.lo[0], inst.hi[0],
                   inst.chi, inst.delta)
    np.testing.assert_allclose(V, ref)


def test_oracle_single_atom_is_deterministic():
    inst = random_instance(np.random.default_rng(7), n_atoms=1)
    np.testing.assert_allclose(oracle_dp(inst).values, oracle_dp(inst, "deterministic").values, rtol=0, atol=1e-9)


def test_nested_lambda_zero_and_single_atom():
    inst = random_instance(np.random.default_rng(8), n_atoms=3)
    np.testing.assert_array_equal(oracle_nested_risk(inst, 0.0, 0.9).values, oracle_dp(inst).values)
    one = random_instance(np.random.default_rng(9), n_atoms=1)
    np.testing.assert_allclose(oracle_nested_risk(one, 0.7, 0.9).values, oracle_dp(one).values, atol=1e-9)


def test_worst_half_of_two_atoms():
    inst = random_instance(np.random.default_rng(10), T=2, M=20, n_atoms=2)
    inst.laws = [DiscretePriceLaw(np.array([10.0, 90.0]), np.array([0.5, 0.5]))] * 2
    V1 = oracle_dp(inst).values[1]
    S = np.array([_stage_values(inst, V1, 1, p) for p in (10.0, 90.0)])
    ref = _correct(S.min(axis=0), inst.lo[0], inst.hi[0], inst.chi, inst.delta)
    np.testing.assert_allclose(oracle_nested_risk(inst, 1.0, 0.5).values[0], ref, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_oracle_concave_and_risk_below_mean(seed):
    inst = random_instance(np.random.default_rng(100 + seed))
    sto = oracle_dp(inst)
    scale = inst.chi
    assert np.all(np.diff(sto.marginals, axis=1) <= 1e-9 * scale)
    risk = oracle_nested_risk(inst, 0.5, 0.8)
    assert np.all(risk.values <= sto.values + 1e-9 * scale)


def test_richardson_gap_is_roundoff():
    inst = random_instance(np.random.default_rng(11), T=4, M=20)
    assert richardson_check(inst) <= 1e-8 * inst.chi * inst.M * inst.delta


def test_oversized_instance_rejected():
    with pytest.raises(ValueError):
        random_instance(np.random.default_rng(12), T=20)


@pytest.mark.parametrize("seed", range(3))
def test_trained_table_matches_oracle(seed):
    inst = random_instance(np.random.default_rng(200 + seed))
    tab = train_on_instance(inst)
    ref = oracle_dp(inst).marginals
    np.testing.assert_allclose(tab.values, ref, rtol=1e-6, atol=1e-6 * np.abs(ref).max())


# fixtures are oracle output frozen by tests/data/make_fixtures.py

def _fixture(name):
    label, inst, marg = read_fixture(DATA / name)
    return label, inst, marg


def test_fixture_stochastic():
    _, inst, marg = _fixture("oracle_stochastic_T4_M30.csv")
    assert (inst.T, inst.M, len(inst.laws[0].atoms)) == (4, 30, 3)
    np.testing.assert_allclose(oracle_dp(inst).marginals, marg, rtol=0, atol=1e-9)
    tab = train_on_instance(inst)
    np.testing.assert_allclose(tab.values, marg, rtol=1e-6, atol=1e-6 * np.abs(marg).max())


def test_fixture_risk():
    _, inst, marg = _fixture("oracle_risk_T4_M30.csv")
    np.testing.assert_allclose(oracle_nested_risk(inst, 0.2, 0.9).marginals, marg, rtol=0, atol=1e-9)
    tab = train_on_instance(inst, risk=RiskSpec(0.2, 0.9))
    np.testing.assert_allclose(tab.values, marg, rtol=1e-6, atol=1e-6 * np.abs(marg).max())
