"""Split the cleared aggregate power over connected EVs by laxity."""

import csv
import logging
import math
from dataclasses import dataclass

log = logging.getLogger(__name__)

_TOL = 1e-9


@dataclass
class EvRuntimeState:
    ev_id: str
    current_energy: float
    session: object
    assigned_power: float = 0.0

    @classmethod
    def fresh(cls, session):
        return cls(session.ev_id, session.initial_energy, session)


@dataclass(frozen=True)
class Assignment:
    ev_id: str
    power: float


@dataclass(frozen=True)
class Allocation:
    assignments: list
    deficit: float  # requested minus assigned, kW
    clamped: bool


def power_bounds(state, t, dt, eta):
    """(lo, hi) grid-side power for one EV in slot t.

    ``lo`` can be positive: it is the charging that keeps the EV on or
    above its latest-start path to the target.
    """
    s = state.session
    if not s.plug_in <= t < s.plug_out:
        return 0.0, 0.0
    e = state.current_energy
    target = s.target_energy
    slots_after = s.plug_out - (t + 1)
    top = min(s.battery_capacity, target - s.max_discharge_power * dt / eta * slots_after)
    head = max(top - e, 0.0)
    hi = min(s.max_charge_power, head / (eta * dt))
    must = target - eta * s.max_charge_power * dt * slots_after
    floor = max(s.min_energy, must)
    if floor < e:
        lo = max(s.max_discharge_power, (floor - e) * eta / dt)
    else:
        lo = (floor - e) / (eta * dt)
    lo = min(lo, hi)
    return lo, hi


def laxity(state, t, dt, eta):
    """Slots left minus slots needed at full power."""
    s = state.session
    left = s.plug_out - t
    need = max(s.target_energy - state.current_energy, 0.0)
    if need <= 0.0:
        return float(left)
    if s.max_charge_power <= 0.0:
        return -math.inf
    return left - need / (eta * s.max_charge_power * dt)


def allocate(cleared, states, t, dt, eta):
    """Greedy allocation; returns an ``Allocation`` in the order of ``states``."""
    bounds = [power_bounds(st, t, dt, eta) for st in states]
    power = [min(max(0.0, lo), hi) for lo, hi in bounds]
    rest = cleared - sum(power)
    lax = [laxity(st, t, dt, eta) for st in states]
    if rest > _TOL:
        order = sorted(range(len(states)), key=lambda i: (lax[i], states[i].ev_id))
        for i in order:
            room = bounds[i][1] - power[i]
            if room <= 0.0:
                continue
            take = min(room, rest)
            power[i] += take
            rest -= take
            if rest <= _TOL:
                break
    elif rest < -_TOL:
        order = sorted(range(len(states)), key=lambda i: (-lax[i], states[i].ev_id))
        for i in order:
            room = power[i] - bounds[i][0]
            if room <= 0.0:
                continue
            take = min(room, -rest)
            power[i] -= take
            rest += take
            if rest >= -_TOL:
                break
    clamped = abs(rest) > 1e-6
    if clamped:
        log.info("slot %d: %.6f kW of cleared power could not be placed", t, rest)
    out = [Assignment(st.ev_id, p) for st, p in zip(states, power)]
    return Allocation(out, rest, clamped)


def energy_delta(power, dt, eta):
    return power * dt * eta if power >= 0.0 else power * dt / eta


def apply(assignments, states, dt, eta):
    """Update energies in place; returns (aggregate delta kWh, shortfall kW)."""
    by_id = {a.ev_id: a.power for a in assignments}
    total = 0.0
    short = 0.0
    for st in states:
        p = by_id.get(st.ev_id, 0.0)
        s = st.session
        de = energy_delta(p, dt, eta)
        new = st.current_energy + de
        if new > s.battery_capacity + _TOL:
            p_ok = (s.battery_capacity - st.current_energy) / (dt * eta)
            short += p - p_ok
            log.info("%s: charge reduced to battery capacity", st.ev_id)
            p, de = p_ok, p_ok * dt * eta
        elif new < s.min_energy - _TOL:
            p_ok = (s.min_energy - st.current_energy) * eta / dt
            short += p - p_ok
            log.info("%s: discharge reduced to energy floor", st.ev_id)
            p, de = p_ok, p_ok * dt / eta
        st.assigned_power = p
        st.current_energy += de
        total += de
    return total, short


TRACE_HEADER = ["interval", "ev_id", "power_kw", "energy_kwh"]


class TraceWriter:
    def __init__(self, path, ev_ids=None):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(TRACE_HEADER)
        self._ids = None if ev_ids is None else set(ev_ids)

    def record(self, t, states):
        for st in states:
            if self._ids is None or st.ev_id in self._ids:
                self._w.writerow([t, st.ev_id, f"{st.assigned_power:.6f}", f"{st.current_energy:.6f}"])

    def close(self):
        self._fh.close()
