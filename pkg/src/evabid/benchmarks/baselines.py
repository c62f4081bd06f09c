"""Benchmark schedulers B1 (charge on arrival), B2 (perfect foresight), B3 (day-ahead plan)."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from evabid.market import settle_power

# earliest-slot preference when the plan is indifferent ($/MWh per slot)
_TIE = 1e-4


class ScheduleError(RuntimeError):
    pass


@dataclass
class BaselineResult:
    charge: np.ndarray  # aggregate grid-side charge power per slot, kW
    discharge: np.ndarray  # aggregate discharge power per slot, kW (<= 0)
    records: list

    @property
    def energy_cost(self):
        return float(sum(r.energy_cost for r in self.records))

    @property
    def degradation_cost(self):
        return float(sum(r.degradation_cost for r in self.records))

    @property
    def total_cost(self):
        return self.energy_cost + self.degradation_cost


def _horizon(sessions, prices, n_slots):
    return len(prices) if n_slots is None else n_slots


def settle_series(charge, discharge, prices, pi_deg, dt, start=0):
    return [
        settle_power(start + t, float(prices[t]), float(charge[t]), float(discharge[t]), pi_deg, dt)
        for t in range(len(charge))
    ]


def b1_power(s, eta, dt):
    """Per-slot power of one EV charging flat out from arrival."""
    n = s.plug_out - s.plug_in
    p = np.zeros(n)
    rem = s.energy_required
    for k in range(n):
        if rem <= 1e-12:
            break
        p[k] = min(s.max_charge_power, rem / (eta * dt))
        rem -= p[k] * eta * dt
    return p


def run_b1(sessions, prices, eta=0.93, pi_deg=10.0, dt=1.0 / 12.0, n_slots=None):
    n = _horizon(sessions, prices, n_slots)
    charge = np.zeros(n)
    for s in sessions:
        p = b1_power(s, eta, dt)
        lo, hi = s.plug_in, min(s.plug_out, n)
        if hi > lo:
            charge[lo:hi] += p[: hi - lo]
    discharge = np.zeros(n)
    return BaselineResult(charge, discharge, settle_series(charge, discharge, prices, pi_deg, dt))


def plan_session(s, prices, eta, pi_deg, dt):
    """Cost-minimal per-EV schedule (charge, discharge) on its window.

    Linear program over the EV's own energy and power limits, ending exactly
    at the target energy. ``prices`` covers the window slot by slot.
    """
    n = s.plug_out - s.plug_in
    pr = np.asarray(prices, dtype=float)
    if pr.shape[0] != n:
        raise ValueError("price window does not match the session")
    tie = _TIE * np.arange(n) / max(n, 1)
    c = np.concatenate([(pr + tie) * dt / 1000.0, (pr - pi_deg) * dt / 1000.0])
    L = np.tril(np.ones((n, n)))
    cum = np.hstack([L * (eta * dt), L * (dt / eta)])
    head = s.battery_capacity - s.initial_energy
    foot = s.min_energy - s.initial_energy
    A_ub = np.vstack([cum, -cum])
    b_ub = np.concatenate([np.full(n, head), np.full(n, -foot)])
    A_eq = cum[-1:].copy()
    b_eq = np.array([s.energy_required])
    bounds = [(0.0, s.max_charge_power)] * n + [(s.max_discharge_power, 0.0)] * n
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise ScheduleError(f"{s.ev_id}: no feasible schedule ({res.message})")
    x = res.x
    return np.clip(x[:n], 0.0, s.max_charge_power), np.clip(x[n:], s.max_discharge_power, 0.0)


def _run_plan(sessions, plan_prices, settle_prices, eta, pi_deg, dt, n):
    charge = np.zeros(n)
    discharge = np.zeros(n)
    for s in sessions:
        if s.plug_out > len(plan_prices):
            raise ScheduleError(f"{s.ev_id}: price path ends before departure")
        pc, pd = plan_session(s, plan_prices[s.plug_in:s.plug_out], eta, pi_deg, dt)
        hi = min(s.plug_out, n)
        charge[s.plug_in:hi] += pc[: hi - s.plug_in]
        discharge[s.plug_in:hi] += pd[: hi - s.plug_in]
    return BaselineResult(charge, discharge, settle_series(charge, discharge, settle_prices, pi_deg, dt))


def run_b2(sessions, realized_prices, eta=0.93, pi_deg=10.0, dt=1.0 / 12.0, n_slots=None):
    n = _horizon(sessions, realized_prices, n_slots)
    rt = np.asarray(realized_prices, dtype=float)
    return _run_plan(sessions, rt, rt, eta, pi_deg, dt, n)


def run_b3(sessions, day_ahead_prices, realized_prices, eta=0.93, pi_deg=10.0, dt=1.0 / 12.0, n_slots=None):
    n = _horizon(sessions, realized_prices, n_slots)
    da = np.asarray(day_ahead_prices, dtype=float)
    rt = np.asarray(realized_prices, dtype=float)
    return _run_plan(sessions, da, rt, eta, pi_deg, dt, n)
