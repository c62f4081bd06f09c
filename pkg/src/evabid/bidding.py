"""Two-sided stepwise bid curves from a marginal value table.

The state ``e`` is the aggregate energy at the start of slot t (that is,
after slot t - 1). Reachable post-decision energies are bounded by the
power limits of slot t and by E-/E+ at the end of slot t.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

EPS_TIE = 1e-6


class InfeasibleStateError(ValueError):
    pass


class ClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BidCurve:
    """Cumulative (quantity kW, price $/MWh) steps on each side."""

    t: int
    charge: tuple = ()
    discharge: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Transitions:
    e_min: float
    e_max: float
    p_min: float
    p_max: float


def feasible_transitions(e, env, t, eta, tol=1e-9):
    dt = env.slot_length
    e_max = min(e + env.P_plus[t] * dt * eta, env.E_plus[t])
    e_min = max(e + env.P_minus[t] * dt / eta, env.E_minus[t])
    if e_min > e_max + tol:
        raise InfeasibleStateError(f"no reachable energy from e={e:.6g} at slot {t}")
    e_max = max(e_max, e)
    e_min = min(e_min, e)
    return Transitions(e_min, e_max, p_min=(e_min - e) * eta / dt, p_max=(e_max - e) / (eta * dt))


def clamped_transitions(e, env, t, eta):
    """Like ``feasible_transitions`` but repairs an inconsistent state.

    If the envelope cannot be met from ``e`` the bid collapses onto the
    closest reachable energy, which forces full charge (or discharge).
    """
    try:
        return feasible_transitions(e, env, t, eta), False
    except InfeasibleStateError:
        pass
    dt = env.slot_length
    top = e + env.P_plus[t] * dt * eta
    bot = e + env.P_minus[t] * dt / eta
    target = top if top < env.E_minus[t] else bot
    p = (target - e) / (eta * dt) if target >= e else (target - e) * eta / dt
    if target >= e:
        return Transitions(target, target, p_min=0.0, p_max=p), True
    return Transitions(target, target, p_min=p, p_max=0.0), True


def marginal_charge_price(v, eta):
    return eta * v


def marginal_discharge_price(v, eta, pi_deg):
    return pi_deg + v / eta


def _antiderivative(row, grid):
    """Integral of the piecewise-linear interpolant from grid.lo to each point."""
    d = grid.delta
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (row[1:] + row[:-1]) * d)])
    return cum


def _integral_to(row, cum, grid, x):
    d = grid.delta
    pos = (np.asarray(x, dtype=float) - grid.lo) / d
    m = grid.M
    below = pos < 0.0
    above = pos > m - 1
    p = np.clip(pos, 0.0, m - 1.0)
    i = np.minimum(np.floor(p).astype(np.int64), m - 2)
    w = p - i
    val = cum[i] + d * (row[i] * w + 0.5 * (row[i + 1] - row[i]) * w * w)
    val = np.where(below, row[0] * (pos * d), val)
    val = np.where(above, cum[-1] + row[-1] * (pos - (m - 1)) * d, val)
    return val


def segment_averages(row, grid, a, b):
    """Mean of the interpolated row over each [a_n, b_n] (a_n < b_n)."""
    cum = _antiderivative(row, grid)
    return (_integral_to(row, cum, grid, b) - _integral_to(row, cum, grid, a)) / (np.asarray(b) - np.asarray(a))


def build_bid_curve(table, t, e, env, N, eta, pi_deg, eps=EPS_TIE, row=None, transitions=None):
    """Bid curve for local slot t (table row t, envelope slot t).

    ``transitions`` overrides the reach computed from ``env``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if transitions is None:
        tr, clamped = clamped_transitions(e, env, t, eta)
        if clamped:
            warnings.warn(f"state e={e:.6g} inconsistent with envelope at slot {t}; clamped", ClampWarning)
    else:
        tr, clamped = transitions, False
    row = table.values[t] if row is None else row
    n = np.arange(1, N + 1)
    charge = ()
    if tr.p_max > 0.0 and tr.e_max > e:
        de = (tr.e_max - e) / N
        avg = segment_averages(row, table.grid, e + (n - 1) * de, e + n * de)
        price = eta * avg - eps * n
        q = n / N * tr.p_max
        charge = tuple(zip(q.tolist(), price.tolist()))
    discharge = ()
    if tr.p_min < 0.0 and tr.e_min < e:
        de = (e - tr.e_min) / N
        avg = segment_averages(row, table.grid, e - n * de, e - (n - 1) * de)
        price = pi_deg + avg / eta + eps * n
        q = n / N * tr.p_min
        discharge = tuple(zip(q.tolist(), price.tolist()))
    return BidCurve(t, charge, discharge, {"clamped": clamped, "e": e})


@dataclass(frozen=True)
class Validation:
    ok: bool
    message: str = ""
    indices: tuple = ()

    def __bool__(self):
        return self.ok


def validate(curve, p_max=None, p_min=None, tol=1e-9):
    c, d = curve.charge, curve.discharge
    for i in range(1, len(c)):
        if not c[i][1] < c[i - 1][1]:
            return Validation(False, "charge prices not strictly decreasing", (i - 1, i))
        if not c[i][0] > c[i - 1][0]:
            return Validation(False, "charge quantities not increasing", (i - 1, i))
    for i in range(1, len(d)):
        if not d[i][1] > d[i - 1][1]:
            return Validation(False, "discharge prices not strictly increasing", (i - 1, i))
        if not d[i][0] < d[i - 1][0]:
            return Validation(False, "discharge quantities not decreasing", (i - 1, i))
    for i, (q, _) in enumerate(c):
        if q < -tol or (p_max is not None and q > p_max + tol):
            return Validation(False, "charge quantity out of range", (i,))
    for i, (q, _) in enumerate(d):
        if q > tol or (p_min is not None and q < p_min - tol):
            return Validation(False, "discharge quantity out of range", (i,))
    if c and d:
        hi = max(range(len(c)), key=lambda i: c[i][1])
        lo = min(range(len(d)), key=lambda i: d[i][1])
        if not c[hi][1] < d[lo][1]:
            return Validation(False, "charge price not below discharge price", (hi, lo))
    return Validation(True)


BID_HEADER = ["interval", "side", "step", "quantity_kw", "price_usd_per_mwh"]


def bid_rows(curve, interval=None):
    k = curve.t if interval is None else interval
    for side, steps in (("charge", curve.charge), ("discharge", curve.discharge)):
        for n, (q, p) in enumerate(steps, start=1):
            yield [k, side, n, f"{q:.6f}", f"{p:.6f}"]


def write_bids(path, curves):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BID_HEADER)
        for c in curves:
            for r in bid_rows(c):
                w.writerow(r)
