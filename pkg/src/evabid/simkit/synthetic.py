"""Synthetic price and fleet data with a fixed seed.

Prices: a two-peak daily day-ahead profile shifted by an AR(1) daily level,
real-time = day-ahead + Gaussian deviation + rare spikes. Sessions: arrival
hour from a morning/evening mixture, lognormal dwell time, energy need
drawn so the session stays reachable.
"""

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from evabid.fleet import ChargingSession, session_violations
from evabid.price_model import PriceSeries


@dataclass
class PriceParams:
    base: float = 32.0
    morning_peak: float = 14.0
    evening_peak: float = 26.0
    night_dip: float = 8.0
    level_ar: float = 0.7
    level_sd: float = 4.0
    da_noise_sd: float = 1.0
    rt_dev_sd: float = 9.0
    spike_prob: float = 0.004
    spike_scale: float = 90.0
    dip_prob: float = 0.002
    dip_scale: float = 40.0


@dataclass
class FleetParams:
    battery_kwh: float = 100.0
    max_charge_kw: float = 50.0
    max_discharge_kw: float = -50.0
    v2g_floor_kwh: float = 20.0
    evening_share: float = 0.6
    evening_hour: float = 18.5
    evening_sd: float = 1.5
    morning_hour: float = 8.5
    morning_sd: float = 1.2
    dwell_median_h: float = 8.0
    dwell_log_sd: float = 0.45
    min_dwell_h: float = 1.0
    max_dwell_h: float = 20.0
    need_mean_kwh: float = 30.0
    need_sd_kwh: float = 12.0
    init_lo_kwh: float = 15.0
    init_hi_kwh: float = 60.0


def daily_profile(slots_per_day, p):
    h = np.arange(slots_per_day) * 24.0 / slots_per_day
    return (
        p.base
        + p.morning_peak * np.exp(-0.5 * ((h - 8.0) / 1.8) ** 2)
        + p.evening_peak * np.exp(-0.5 * ((h - 18.5) / 2.2) ** 2)
        - p.night_dip * np.exp(-0.5 * ((h - 3.5) / 2.5) ** 2)
    )


def generate_prices(days, seed, slot_minutes=5, params=None, t0=None):
    p = PriceParams() if params is None else params
    rng = np.random.default_rng(seed)
    spd = 1440 // slot_minutes
    prof = daily_profile(spd, p)
    level = np.empty(days)
    x = 0.0
    for d in range(days):
        x = p.level_ar * x + rng.normal(0.0, p.level_sd)
        level[d] = x
    da = (prof[None, :] + level[:, None]).ravel() + rng.normal(0.0, p.da_noise_sd, days * spd)
    rt = da + rng.normal(0.0, p.rt_dev_sd, days * spd)
    spikes = rng.random(days * spd) < p.spike_prob
    rt[spikes] += rng.exponential(p.spike_scale, int(spikes.sum()))
    dips = rng.random(days * spd) < p.dip_prob
    rt[dips] -= rng.exponential(p.dip_scale, int(dips.sum()))
    t0 = datetime(2018, 1, 1) if t0 is None else t0
    return PriceSeries(t0, slot_minutes, np.round(rt, 4), np.round(da, 4))


def _draw(rng, day, spd, p, eta, dt):
    if rng.random() < p.evening_share:
        hour = rng.normal(p.evening_hour, p.evening_sd)
    else:
        hour = rng.normal(p.morning_hour, p.morning_sd)
    hour = float(np.clip(hour, 0.0, 23.99))
    dwell = float(np.clip(p.dwell_median_h * np.exp(rng.normal(0.0, p.dwell_log_sd)), p.min_dwell_h, p.max_dwell_h))
    start = day * spd + int(round(hour * spd / 24.0))
    n = max(2, int(round(dwell * spd / 24.0)))
    init = float(rng.uniform(p.init_lo_kwh, p.init_hi_kwh))
    need = float(rng.normal(p.need_mean_kwh, p.need_sd_kwh))
    need = float(np.clip(need, 2.0, p.battery_kwh - init))
    return start, start + n, round(need, 3), round(init, 3)


def generate_fleet(n, days, seed, slot_minutes=5, params=None, eta=0.93, first_day=0):
    """``n`` sessions with arrivals spread uniformly over ``days`` days."""
    p = FleetParams() if params is None else params
    rng = np.random.default_rng(seed)
    spd = 1440 // slot_minutes
    dt = slot_minutes / 60.0
    out = []
    for i in range(n):
        day = first_day + int(rng.integers(0, days)) if days > 0 else first_day
        while True:
            a, b, need, init = _draw(rng, day, spd, p, eta, dt)
            s = ChargingSession(
                f"ev{i:05d}", a, b, need, p.battery_kwh, init, p.max_charge_kw,
                p.max_discharge_kw, min(p.v2g_floor_kwh, init),
            )
            if not session_violations(s, eta, dt):
                break
        out.append(s)
    out.sort(key=lambda s: (s.plug_in, s.ev_id))
    return out
