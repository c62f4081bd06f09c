"""Rolling-horizon simulation of the bidding strategies and the baselines.

All slot indices here are global: slot 0 is the first row of the price
series. The first ``history_days`` days are history only (model fitting
and the arrival forecast); simulated days follow.
"""

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from evabid import kernels
from evabid.benchmarks.baselines import run_b1, run_b2, run_b3
from evabid.bidding import Transitions, build_bid_curve
from evabid.dispatch import EvRuntimeState, allocate, apply, energy_delta, power_bounds
from evabid.fleet import aggregate, apply_margin, forecast_envelope, load_sessions
from evabid.market import clear, settle_power
from evabid.price_model import anchored, by_day, fit, fit_deviation, read_prices
from evabid.simkit.synthetic import generate_fleet, generate_prices
from evabid.valuation import RiskSpec, TrainingConfig, train

class UndefinedRatioError(ValueError):
    pass


@dataclass
class SimData:
    rt: np.ndarray
    da: np.ndarray
    sessions: list
    start: int  # first simulated slot
    slots_per_day: int

    def sim_sessions(self, days):
        hi = self.start + days * self.slots_per_day
        return [s for s in self.sessions if s.plug_in >= self.start and s.plug_out <= hi]


def load_data(cfg):
    """Prices and sessions from the configured files, or synthetic ones."""
    spd = cfg.slots_per_day
    total_days = cfg.history_days + cfg.days + max(1, -(-cfg.horizon_slots // spd) - 1)
    if cfg.prices_path:
        ps = read_prices(cfg.prices_path, cfg.slot_minutes)
    else:
        ps = generate_prices(total_days, cfg.seed, cfg.slot_minutes)
    if ps.n_slots < (cfg.history_days + cfg.days) * spd:
        raise ValueError("price series shorter than history_days + days")
    if cfg.sessions_path:
        sessions = load_sessions(cfg.sessions_path, cfg.eta, cfg.slot_hours)
    else:
        per_day = cfg.fleet_size / cfg.days
        n_warm = int(round(per_day * cfg.warmup_days))
        warm = generate_fleet(n_warm, cfg.warmup_days, cfg.seed + 7919, cfg.slot_minutes,
                              eta=cfg.eta, first_day=cfg.history_days - cfg.warmup_days)
        main = generate_fleet(cfg.fleet_size, cfg.days, cfg.seed + 104729, cfg.slot_minutes,
                              eta=cfg.eta, first_day=cfg.history_days)
        sessions = [replace(s, ev_id="w" + s.ev_id) for s in warm] + main
    return SimData(ps.rt.astype(float), ps.da.astype(float), sessions, cfg.history_days * spd, spd)


@dataclass
class IntervalStats:
    cleared: float
    assigned: float
    clamped: bool
    latency: float


@dataclass
class StrategyReport:
    strategy: str
    records: list
    slots_per_day: int
    start: int = 0
    train_seconds: list = field(default_factory=list)
    latencies: list = field(default_factory=list)
    intervals: list = field(default_factory=list)
    bids: list = field(default_factory=list)
    departures: list = field(default_factory=list)  # (ev_id, slot, energy, target)
    energy_bounds_ok: bool = True
    wall_seconds: float = 0.0
    profit_ratio: float = None
    profit_ratio_clamped: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def energy_cost(self):
        return float(sum(r.energy_cost for r in self.records))

    @property
    def degradation_cost(self):
        return float(sum(r.degradation_cost for r in self.records))

    @property
    def total_cost(self):
        return float(sum(r.total for r in self.records))

    def per_day(self):
        """(days, 3) array of energy, degradation and total cost."""
        n = len(self.records) // self.slots_per_day
        out = np.zeros((n, 3))
        for r in self.records:
            d = (r.t - self.start) // self.slots_per_day
            if 0 <= d < n:
                out[d] += (r.energy_cost, r.degradation_cost, r.total)
        return out

    def latency_stats(self):
        if not self.latencies:
            return {"mean": 0.0, "max": 0.0, "p99": 0.0}
        a = np.asarray(self.latencies)
        return {"mean": float(a.mean()), "max": float(a.max()), "p99": float(np.quantile(a, 0.99))}


def profit_ratio(cost_strategy, cost_b1, cost_b2, clamp=True):
    """Share of the B1-to-B2 cost gap captured; clamped to [0, 1] by default."""
    raw, _ = profit_ratio_flagged(cost_strategy, cost_b1, cost_b2)
    return min(max(raw, 0.0), 1.0) if clamp else raw


def profit_ratio_flagged(cost_strategy, cost_b1, cost_b2):
    if not cost_b1 > cost_b2:
        raise UndefinedRatioError("profit ratio needs cost_b1 > cost_b2")
    raw = (cost_b1 - cost_strategy) / (cost_b1 - cost_b2)
    return raw, not (0.0 <= raw <= 1.0)


def _shifted(sessions, offset):
    return [replace(s, plug_in=s.plug_in - offset, plug_out=s.plug_out - offset) for s in sessions]


def _baseline(cfg, data):
    spd = data.slots_per_day
    n = cfg.days * spd
    lo = data.start
    sess = _shifted(data.sim_sessions(cfg.days), lo)
    rt = data.rt[lo:lo + n]
    da = data.da[lo:lo + n]
    if cfg.strategy == "B1":
        res = run_b1(sess, rt, cfg.eta, cfg.pi_deg, cfg.slot_hours)
    elif cfg.strategy == "B2":
        res = run_b2(sess, rt, cfg.eta, cfg.pi_deg, cfg.slot_hours)
    else:
        res = run_b3(sess, da, rt, cfg.eta, cfg.pi_deg, cfg.slot_hours)
    recs = [replace(r, t=r.t + lo) for r in res.records]
    return StrategyReport(cfg.strategy, recs, spd, lo)


class _ArrivalHistory:
    """Envelopes of past arrivals, one per past day, cached."""

    def __init__(self, sessions, cfg):
        self.cfg = cfg
        self.by_day = {}
        spd = cfg.slots_per_day
        for s in sessions:
            self.by_day.setdefault(s.plug_in // spd, []).append(s)
        self.first_day = min(self.by_day, default=0)
        self._cache = {}

    def arrivals_window(self, t0, T):
        spd = self.cfg.slots_per_day
        out = []
        for d in range(t0 // spd, -(-(t0 + T) // spd)):
            out.extend(s for s in self.by_day.get(d, ()) if t0 <= s.plug_in < t0 + T)
        return out

    def envelope(self, day, T):
        key = (day, T)
        if key not in self._cache:
            cfg = self.cfg
            t0 = day * cfg.slots_per_day
            arr = self.arrivals_window(t0, T)
            self._cache[key] = aggregate(arr, T, cfg.eta, cfg.slot_hours, start=t0)
        return self._cache[key]

    def forecast(self, day, T):
        """Past-day envelopes whose arrivals are fully known before ``day``."""
        span = -(-self.cfg.horizon_slots // self.cfg.slots_per_day)
        last = day - span
        first = max(last - self.cfg.forecast_days + 1, self.first_day)
        return [self.envelope(d, T) for d in range(first, last + 1)]


def _price_model(cfg, data):
    spd = data.slots_per_day
    lo = data.start - cfg.history_days * spd
    hist_rt = by_day(data.rt[lo:data.start], spd)
    if cfg.strategy == "S1":
        return fit(hist_rt), None
    hist_da = by_day(data.da[lo:data.start], spd)
    return None, fit_deviation(hist_rt, hist_da)


def _chain_row(table, env, k, H, rt, t0, cfg, phys):
    """Row k refined by H known-price steps over the next H slots."""
    T = table.T
    top = min(k + H, T - 1)
    u = table.values[top]
    if top == k:
        return u
    js = np.arange(top - 1, k - 1, -1)
    g = table.grid
    kb = phys.eta * env.P_plus[js + 1] * phys.dt / g.delta
    ka = -env.P_minus[js + 1] * phys.dt / (phys.eta * g.delta)
    prices = rt[t0 + js + 1]
    return kernels.deterministic_chain(
        np.ascontiguousarray(u, dtype=float), np.ascontiguousarray(prices, dtype=float),
        np.ascontiguousarray(kb), np.ascontiguousarray(ka),
        np.ascontiguousarray(env.E_minus[js]), np.ascontiguousarray(env.E_plus[js]),
        g.points, phys.chi, phys.eta, phys.pi_deg,
    )


def _day_inputs(cfg, data, hist, live, t0, s1_model, dev):
    """Envelope and price model for a training run starting at slot t0."""
    spd = data.slots_per_day
    T = min(cfg.horizon_slots, data.rt.shape[0] - t0)
    energies = {st.ev_id: st.current_energy for st in live}
    env = aggregate([st.session for st in live], T, cfg.eta, cfg.slot_hours, start=t0, energies=energies)
    if cfg.envelope_mode == "exact":
        env = env + aggregate(hist.arrivals_window(t0, T), T, cfg.eta, cfg.slot_hours, start=t0)
    else:
        past = [replace(h, start=t0) for h in hist.forecast(t0 // spd, T)]
        env = forecast_envelope(past, env, cfg.smoothing)
    env = apply_margin(env, cfg.envelope_margin_kwh)
    if cfg.strategy == "S1":
        return env, s1_model
    return env, anchored(data.da[t0:t0 + T], dev, start=t0)


def _training_config(cfg):
    risk = RiskSpec(cfg.lam, cfg.alpha) if cfg.strategy == "S3" and cfg.lam > 0.0 else None
    return TrainingConfig(H=0, chi=cfg.chi, M=cfg.M, eta=cfg.eta, pi_deg=cfg.pi_deg, dt=cfg.slot_hours,
                          risk=risk, strict=False)


def first_table(cfg, data=None):
    """Value table for the first simulated day (no EVs carried over)."""
    if cfg.strategy not in ("S1", "S2", "S3"):
        raise ValueError("training needs strategy S1, S2 or S3")
    data = load_data(cfg) if data is None else data
    s1_model, dev = _price_model(cfg, data)
    hist = _ArrivalHistory(list(data.sessions), cfg)
    env, model = _day_inputs(cfg, data, hist, [], data.start, s1_model, dev)
    return train(env, _training_config(cfg), model), env


def run_simulation(cfg, data=None, keep_bids=1, trace=None):
    """Simulate one strategy; baselines delegate to the benchmark schedulers."""
    data = load_data(cfg) if data is None else data
    wall = time.perf_counter()
    if cfg.strategy in ("B1", "B2", "B3"):
        rep = _baseline(cfg, data)
        rep.wall_seconds = time.perf_counter() - wall
        return rep

    spd = data.slots_per_day
    dt = cfg.slot_hours
    eta = cfg.eta
    tcfg = _training_config(cfg)
    risk = tcfg.risk
    phys = tcfg.physics
    s1_model, dev = _price_model(cfg, data)
    sim = data.sim_sessions(cfg.days)
    hist = _ArrivalHistory([s for s in data.sessions if s.plug_in < data.start] + sim, cfg)
    arrivals = {}
    for s in sim:
        arrivals.setdefault(s.plug_in, []).append(s)

    rep = StrategyReport(cfg.strategy, [], spd, data.start, meta={"risk": risk, "H": cfg.H})
    states = {}
    step = cfg.retrain_slots
    end = data.start + cfg.days * spd
    for t0 in range(data.start, end, step):
        live = [st for st in states.values() if st.session.plug_out > t0]
        env, model = _day_inputs(cfg, data, hist, live, t0, s1_model, dev)
        tic = time.perf_counter()
        table = train(env, tcfg, model)
        rep.train_seconds.append(time.perf_counter() - tic)

        e_rel = 0.0
        for k in range(min(step, end - t0)):
            t = t0 + k
            for s in arrivals.get(t, ()):
                states[s.ev_id] = EvRuntimeState.fresh(s)
            active = [st for st in states.values() if st.session.plug_in <= t < st.session.plug_out]
            row = _chain_row(table, env, k, cfg.H, data.rt, t0, cfg, phys) if cfg.H > 0 else None

            tic = time.perf_counter()
            lo_sum = hi_sum = 0.0
            de_lo = de_hi = 0.0
            for st in active:
                lo, hi = power_bounds(st, t, dt, eta)
                lo_sum += lo
                hi_sum += hi
                de_lo += energy_delta(lo, dt, eta)
                de_hi += energy_delta(hi, dt, eta)
            tr = Transitions(e_rel + min(de_lo, 0.0), e_rel + max(de_hi, 0.0),
                             min(lo_sum, 0.0), max(hi_sum, 0.0))
            curve = build_bid_curve(table, k, e_rel, env, cfg.N, eta, cfg.pi_deg, row=row, transitions=tr)
            rep.latencies.append(time.perf_counter() - tic)
            if len(rep.bids) < keep_bids:
                rep.bids.append(replace(curve, t=t))

            price = float(data.rt[t])
            res = clear(curve, price, check=False)
            cleared = res.cleared_charge + res.cleared_discharge
            alloc = allocate(cleared, active, t, dt, eta)
            delta, short = apply(alloc.assignments, active, dt, eta)
            if short != 0.0:
                rep.energy_bounds_ok = False
            e_rel += delta
            pc = sum(st.assigned_power for st in active if st.assigned_power > 0.0)
            pd = sum(st.assigned_power for st in active if st.assigned_power < 0.0)
            rep.records.append(settle_power(t, price, pc, pd, cfg.pi_deg, dt))
            rep.intervals.append(IntervalStats(cleared, pc + pd, alloc.clamped, rep.latencies[-1]))
            if trace is not None:
                trace.record(t, active)
            for st in active:
                s = st.session
                if not (s.min_energy - 1e-6 <= st.current_energy <= s.battery_capacity + 1e-6):
                    rep.energy_bounds_ok = False
                if s.plug_out == t + 1:
                    rep.departures.append((s.ev_id, t, st.current_energy, s.target_energy))
                    del states[st.ev_id]
        rep.meta.setdefault("grid_delta", []).append(table.grid.delta)
    rep.wall_seconds = time.perf_counter() - wall
    return rep


def attach_ratio(rep, cost_b1, cost_b2):
    raw, flag = profit_ratio_flagged(rep.total_cost, cost_b1, cost_b2)
    rep.profit_ratio = min(max(raw, 0.0), 1.0)
    rep.profit_ratio_clamped = flag
    if flag:
        warnings.warn(f"{rep.strategy}: raw profit ratio {raw:.4f} clamped", RuntimeWarning)
    return rep


def run_matrix(cfg, strategies, data=None):
    data = load_data(cfg) if data is None else data
    out = {s: run_simulation(cfg.with_(strategy=s), data) for s in strategies}
    if "B1" in out and "B2" in out:
        for s, r in out.items():
            try:
                attach_ratio(r, out["B1"].total_cost, out["B2"].total_cost)
            except UndefinedRatioError:
                pass
    return out


def horizon_sweep(cfg, H_values, data=None, base="S2"):
    """(H, profit ratio, total cost) rows, B1/B2 from the same data."""
    data = load_data(cfg) if data is None else data
    b1 = run_simulation(cfg.with_(strategy="B1"), data).total_cost
    b2 = run_simulation(cfg.with_(strategy="B2"), data).total_cost
    rows = []
    for H in H_values:
        r = run_simulation(cfg.with_(strategy=base, H=int(H)), data)
        rows.append((int(H), profit_ratio(r.total_cost, b1, b2, clamp=False), r.total_cost))
    return rows


@dataclass
class RiskRow:
    lam: float
    alpha: float
    energy_cost: float
    degradation_cost: float
    total_cost: float
    seconds: float


def risk_sweep(cfg, lambdas, alphas, data=None):
    data = load_data(cfg) if data is None else data
    rows = []
    for a in alphas:
        for lam in lambdas:
            r = run_simulation(cfg.with_(strategy="S3", lam=float(lam), alpha=float(a)), data)
            rows.append(RiskRow(float(lam), float(a), r.energy_cost, r.degradation_cost, r.total_cost,
                                r.wall_seconds))
    return rows


def dispatch_mismatch(rep):
    """Max |assigned - cleared| over intervals where dispatch did not clamp."""
    gaps = [abs(i.assigned - i.cleared) for i in rep.intervals if not i.clamped]
    return max(gaps, default=0.0)


def departure_shortfall(rep):
    """Largest (target - final energy) over departed EVs, kWh."""
    return max((tgt - e for _, _, e, tgt in rep.departures), default=0.0)


def check_accounting(rep):
    total = sum(r.energy_cost + r.degradation_cost for r in rep.records)
    return abs(total - rep.total_cost)
