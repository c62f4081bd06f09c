"""Price-taker clearing of stepwise bids and per-interval settlement."""

import csv
from dataclasses import dataclass

from evabid.bidding import validate


class InvalidCurveError(ValueError):
    pass


@dataclass(frozen=True)
class ClearingResult:
    t: int
    cleared_charge: float
    cleared_discharge: float
    clearing_price: float


@dataclass(frozen=True)
class SettlementRecord:
    t: int
    price: float
    charge_kw: float
    discharge_kw: float
    energy_cost: float
    degradation_cost: float

    @property
    def total(self):
        return self.energy_cost + self.degradation_cost


def clear(curve, price, check=True):
    """Inclusive clearing: a step clears when the price reaches its bid."""
    if check:
        v = validate(curve)
        if not v:
            raise InvalidCurveError(f"{v.message} at {v.indices}")
    qc = 0.0
    for q, p in curve.charge:
        if p >= price:
            qc = q
        else:
            break
    qd = 0.0
    for q, p in curve.discharge:
        if p <= price:
            qd = q
        else:
            break
    if qc > 0.0 and qd < 0.0:
        # cannot happen for a valid curve
        raise InvalidCurveError("both sides cleared")
    return ClearingResult(curve.t, qc, qd, price)


def settle_power(t, price, p_charge, p_discharge, pi_deg, dt):
    energy = price * (p_charge + p_discharge) * dt / 1000.0
    degradation = -pi_deg * p_discharge * dt / 1000.0 + 0.0  # no negative zero
    return SettlementRecord(t, price, p_charge, p_discharge, energy, degradation)


def settle(result, pi_deg, dt):
    return settle_power(result.t, result.clearing_price, result.cleared_charge,
                        result.cleared_discharge, pi_deg, dt)


SETTLEMENT_HEADER = [
    "interval", "price", "cleared_charge_kw", "cleared_discharge_kw",
    "energy_cost_usd", "degradation_cost_usd",
]


def write_settlements(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SETTLEMENT_HEADER)
        for r in records:
            w.writerow([r.t, f"{r.price:.6f}", f"{r.charge_kw:.6f}", f"{r.discharge_kw:.6f}",
                        repr(r.energy_cost), repr(r.degradation_cost)])


def read_settlements(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            out.append(SettlementRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]),
                                        float(row[4]), float(row[5])))
    return out
