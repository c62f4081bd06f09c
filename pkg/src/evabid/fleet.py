"""Charging sessions and the aggregate energy/power envelope of a fleet.

Energies in an envelope are cumulative energy delivered to the batteries
since the envelope's reference slot (each EV's energy at that time is the
zero), so per-EV envelopes add up directly. Index t of ``E_plus``/``E_minus``
bounds the energy at the *end* of slot t; ``P_plus[t]``/``P_minus[t]`` bound
the grid-side power during slot t.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

SESSION_HEADER = [
    "ev_id",
    "plug_in_slot",
    "plug_out_slot",
    "energy_required_kwh",
    "battery_capacity_kwh",
    "initial_energy_kwh",
    "max_charge_kw",
    "max_discharge_kw",
    "min_energy_kwh",
]

_TOL = 1e-9


class SessionParseError(ValueError):
    def __init__(self, row, msg):
        super().__init__(f"row {row}: {msg}")
        self.row = row


class SessionValidationError(ValueError):
    def __init__(self, row, violations):
        super().__init__(f"row {row}: " + "; ".join(violations))
        self.row = row
        self.violations = list(violations)


@dataclass(frozen=True)
class ChargingSession:
    ev_id: str
    plug_in: int
    plug_out: int
    energy_required: float
    battery_capacity: float
    initial_energy: float
    max_charge_power: float
    max_discharge_power: float = 0.0
    min_energy: float = 0.0

    @property
    def target_energy(self):
        return self.initial_energy + self.energy_required

    @property
    def n_slots(self):
        return self.plug_out - self.plug_in

    def connected(self, t):
        return self.plug_in <= t < self.plug_out


def session_violations(s, eta=0.93, slot_hours=1.0 / 12.0):
    """Names of the session invariants that ``s`` breaks (empty if none)."""
    out = []
    if not s.plug_in < s.plug_out:
        out.append("plug_in < plug_out")
    if not (0.0 <= s.initial_energy <= s.battery_capacity + _TOL):
        out.append("0 <= initial_energy <= battery_capacity")
    if s.min_energy > s.initial_energy + _TOL:
        out.append("min_energy <= initial_energy")
    if s.energy_required < 0.0:
        out.append("energy_required >= 0")
    if s.target_energy > s.battery_capacity + _TOL:
        out.append("initial_energy + energy_required <= battery_capacity")
    if s.max_charge_power < 0.0:
        out.append("max_charge_power >= 0")
    if s.max_discharge_power > 0.0:
        out.append("max_discharge_power <= 0")
    if s.plug_in < s.plug_out:
        reach = eta * s.max_charge_power * slot_hours * (s.plug_out - s.plug_in)
        if s.energy_required > reach * (1.0 + 1e-12) + _TOL:
            out.append(
                f"energy_required reachable ({s.energy_required:g} kWh > {reach:g} kWh at full power)"
            )
    return out


def _parse_row(i, row):
    if len(row) != len(SESSION_HEADER):
        raise SessionParseError(i, f"expected {len(SESSION_HEADER)} fields, got {len(row)}")
    try:
        return ChargingSession(
            ev_id=row[0].strip(),
            plug_in=int(row[1]),
            plug_out=int(row[2]),
            energy_required=float(row[3]),
            battery_capacity=float(row[4]),
            initial_energy=float(row[5]),
            max_charge_power=float(row[6]),
            max_discharge_power=float(row[7]),
            min_energy=float(row[8]),
        )
    except ValueError as exc:
        raise SessionParseError(i, str(exc)) from None


def parse_sessions(lines, eta=0.93, slot_hours=1.0 / 12.0):
    """Parse session rows from an iterable of CSV lines.

    Row numbers in errors count data rows from 1. A header line matching
    ``SESSION_HEADER`` is skipped if present.
    """
    sessions = []
    i = 0
    for row in csv.reader(lines):
        if not row or all(not c.strip() for c in row):
            continue
        if [c.strip() for c in row] == SESSION_HEADER:
            continue
        i += 1
        s = _parse_row(i, row)
        bad = session_violations(s, eta, slot_hours)
        if bad:
            raise SessionValidationError(i, bad)
        sessions.append(s)
    return sessions


def load_sessions(path, eta=0.93, slot_hours=1.0 / 12.0):
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_sessions(fh, eta, slot_hours)


def write_sessions(path, sessions):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SESSION_HEADER)
        for s in sessions:
            w.writerow([
                s.ev_id, s.plug_in, s.plug_out, repr(float(s.energy_required)),
                repr(float(s.battery_capacity)), repr(float(s.initial_energy)),
                repr(float(s.max_charge_power)), repr(float(s.max_discharge_power)),
                repr(float(s.min_energy)),
            ])


@dataclass
class FleetEnvelope:
    slot_length: float
    E_plus: np.ndarray
    E_minus: np.ndarray
    P_plus: np.ndarray
    P_minus: np.ndarray
    E_need: float
    start: int = 0
    degraded: bool = False

    def __post_init__(self):
        for name in ("E_plus", "E_minus", "P_plus", "P_minus"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.E_plus.shape[0]
        if any(getattr(self, k).shape != (n,) for k in ("E_minus", "P_plus", "P_minus")):
            raise ValueError("envelope arrays must share one length")
        self.E_need = float(self.E_need)

    @property
    def n_slots(self):
        return self.E_plus.shape[0]

    @classmethod
    def zeros(cls, n_slots, slot_length, start=0):
        z = np.zeros(n_slots)
        return cls(slot_length, z, z.copy(), z.copy(), z.copy(), 0.0, start)

    def __add__(self, other):
        if self.n_slots != other.n_slots or self.start != other.start:
            raise ValueError("envelopes cover different slot ranges")
        return FleetEnvelope(
            self.slot_length,
            self.E_plus + other.E_plus,
            self.E_minus + other.E_minus,
            self.P_plus + other.P_plus,
            self.P_minus + other.P_minus,
            self.E_need + other.E_need,
            self.start,
            self.degraded or other.degraded,
        )

    def scaled(self, w):
        return FleetEnvelope(
            self.slot_length, w * self.E_plus, w * self.E_minus, w * self.P_plus,
            w * self.P_minus, w * self.E_need, self.start, self.degraded,
        )

    def window(self, lo, hi):
        """Sub-envelope for local slots [lo, hi)."""
        ep, em = self.E_plus[lo:hi], self.E_minus[lo:hi]
        return FleetEnvelope(
            self.slot_length, ep, em, self.P_plus[lo:hi], self.P_minus[lo:hi],
            float(em[-1]) if hi > lo else 0.0, self.start + lo, self.degraded,
        )

    def check(self, eta, tol=1e-7):
        """Violated envelope invariants, as messages."""
        out = []
        if np.any(self.E_minus > self.E_plus + tol):
            out.append(f"E_minus > E_plus at slots {np.flatnonzero(self.E_minus > self.E_plus + tol)[:5]}")
        if np.any(self.P_minus > tol) or np.any(self.P_plus < -tol):
            out.append("power bounds straddle zero")
        dt = self.slot_length
        prev_lo, prev_hi = 0.0, 0.0
        for t in range(self.n_slots):
            lo = max(prev_lo + self.P_minus[t] * dt / eta, self.E_minus[t])
            hi = min(prev_hi + eta * self.P_plus[t] * dt, self.E_plus[t])
            if lo > hi + tol:
                out.append(f"no feasible trajectory reaches slot {t}")
                break
            prev_lo, prev_hi = lo, hi
        return out


@dataclass(frozen=True)
class EvaState:
    t: int
    e: float
    envelope: FleetEnvelope = field(repr=False)

    def __post_init__(self):
        if self.t > 0:
            lo = self.envelope.E_minus[self.t - 1]
            hi = self.envelope.E_plus[self.t - 1]
        else:
            lo = hi = 0.0
        if not (lo - 1e-7 <= self.e <= hi + 1e-7):
            raise ValueError(f"state e={self.e} outside [{lo}, {hi}] at t={self.t}")


def session_envelope(s, n_slots, eta, slot_hours, start=0, current_energy=None):
    """Per-EV envelope over global slots [start, start + n_slots).

    Energies are relative to ``current_energy`` (the EV's energy at
    ``start``; defaults to its initial energy, which assumes the EV has not
    been served before ``start``).
    """
    e0 = s.initial_energy if current_energy is None else current_energy
    remaining = max(s.target_energy - e0, 0.0)
    floor = min(s.min_energy - e0, 0.0)
    step_up = eta * s.max_charge_power * slot_hours
    step_dn = s.max_discharge_power * slot_hours / eta

    g = start + np.arange(n_slots)
    begin = max(s.plug_in, start)
    active = (g >= begin) & (g < s.plug_out)
    elapsed = np.clip(g + 1 - begin, 0, None).astype(float)
    left = np.clip(s.plug_out - (g + 1), 0, None).astype(float)

    # above the target only as far as discharging can bring it back
    ceiling = np.minimum(s.battery_capacity - e0, remaining - step_dn * left)
    e_plus = np.minimum(step_up * elapsed, np.maximum(ceiling, remaining))
    lower_path = np.maximum(floor, step_dn * elapsed)
    e_minus = np.maximum(lower_path, remaining - step_up * left)
    e_minus = np.minimum(e_minus, e_plus)
    before = g < begin
    e_plus[before] = 0.0
    e_minus[before] = 0.0
    after = g >= s.plug_out
    e_plus[after] = remaining
    e_minus[after] = remaining

    p_plus = np.where(active, s.max_charge_power, 0.0)
    p_minus = np.where(active, s.max_discharge_power, 0.0)
    need = float(e_minus[-1]) if n_slots else 0.0
    return FleetEnvelope(slot_hours, e_plus, e_minus, p_plus, p_minus, need, start)


def absolute_path(s, env):
    """Per-EV envelope energies as absolute battery energies (kWh)."""
    return s.initial_energy + env.E_minus, s.initial_energy + env.E_plus


def aggregate(sessions, n_slots, eta, slot_hours, start=0, energies=None):
    """Slot-wise sum of per-EV envelopes.

    ``energies`` optionally maps ev_id to the EV's energy at ``start``.
    """
    env = FleetEnvelope.zeros(n_slots, slot_hours, start)
    for s in sessions:
        cur = None if energies is None else energies.get(s.ev_id)
        env = env + session_envelope(s, n_slots, eta, slot_hours, start, cur)
    return env


def split_connected(sessions, t):
    """(connected at t, arriving in the next slot); later arrivals dropped."""
    connected = [s for s in sessions if s.plug_in <= t < s.plug_out]
    arriving = [s for s in sessions if t < s.plug_in <= t + 1]
    return connected, arriving


def smooth(history, factor):
    """Same-slot exponential smoothing of a list of envelopes, oldest first."""
    if not 0.0 < factor <= 1.0:
        raise ValueError("smoothing factor must be in (0, 1]")
    level = history[0]
    for env in history[1:]:
        level = env.scaled(factor) + level.scaled(1.0 - factor)
    return level


def forecast_envelope(history, connected, factor=0.3):
    """Bidding envelope: known connected part plus smoothed arrivals.

    ``history`` holds past days' arriving-EV envelopes aligned with
    ``connected`` (same length, same start). With no history the connected
    part is returned and flagged as degraded.
    """
    if not history:
        return replace(connected, degraded=True)
    level = smooth([replace(h, start=connected.start) for h in history], factor)
    out = connected + level
    out.degraded = connected.degraded
    return out


def apply_margin(env, margin):
    """Shrink the energy band by a constant margin on both sides."""
    if margin <= 0.0:
        return env
    hi = env.E_plus - margin
    lo = env.E_minus + margin
    mid = 0.5 * (env.E_plus + env.E_minus)
    squeeze = lo > hi
    hi = np.where(squeeze, mid, hi)
    lo = np.where(squeeze, mid, lo)
    return replace(env, E_plus=hi, E_minus=lo, E_need=min(env.E_need + margin, float(hi[-1])))


def total_slots(sessions):
    return max((s.plug_out for s in sessions), default=0)


def sessions_in_window(sessions, lo, hi):
    return [s for s in sessions if s.plug_in >= lo and s.plug_out <= hi]


def slots_needed(energy, power, eta, slot_hours):
    if energy <= 0.0:
        return 0.0
    if power <= 0.0:
        return math.inf
    return energy / (eta * power * slot_hours)
