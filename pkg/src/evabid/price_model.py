"""Stage-wise independent price laws.

Prices are $/MWh. A ``PriceModel`` holds a Gaussian per stage; periodic
models (fitted per slot of day) wrap around, anchored ones cover a fixed
horizon only. ``DiscretePriceModel`` carries finitely supported laws and is
used by the enumeration oracles.
"""

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np
from scipy.special import ndtr, ndtri

SIGMA_FLOOR = 0.5


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float


@dataclass(frozen=True)
class DiscretePriceLaw:
    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if a.shape != p.shape or a.ndim != 1 or a.size == 0:
            raise ValueError("atoms and probs must be matching non-empty vectors")
        if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be non-negative and sum to 1")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "probs", p)

    @property
    def mean(self):
        return float(self.atoms @ self.probs)


class PriceModel:
    def __init__(self, mu, sigma, sigma_floor=SIGMA_FLOOR, periodic=True, start=0):
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        if mu.shape != sigma.shape or mu.ndim != 1 or mu.size == 0:
            raise ValueError("mu and sigma must be matching non-empty vectors")
        if not np.all(np.isfinite(mu)):
            raise ValueError("means must be finite")
        if sigma_floor <= 0.0:
            raise ValueError("sigma_floor must be positive")
        self.mu = mu
        self.sigma = np.maximum(sigma, sigma_floor)
        self.sigma_floor = sigma_floor
        self.periodic = periodic
        self.start = start

    @property
    def period(self):
        return self.mu.shape[0]

    def _index(self, t):
        if self.periodic:
            return t % self.period
        k = t - self.start
        if not 0 <= k < self.period:
            raise IndexError(f"slot {t} outside the model horizon")
        return k

    def stage(self, t):
        k = self._index(t)
        return Gaussian(float(self.mu[k]), float(self.sigma[k]))

    def window(self, t0, n):
        idx = [self._index(t) for t in range(t0, t0 + n)]
        return self.mu[idx], self.sigma[idx]


class DiscretePriceModel:
    """One discrete law per stage, indexed from 0."""

    def __init__(self, laws):
        self.laws = list(laws)

    def stage(self, t):
        return self.laws[t]


@dataclass(frozen=True)
class DeviationModel:
    mean: np.ndarray
    std: np.ndarray

    @property
    def period(self):
        return len(self.mean)


def _per_slot(samples):
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 2:
        return [col[np.isfinite(col)] for col in arr.T]
    return [np.asarray(s, dtype=float) for s in samples]


def _moments(samples, sigma_floor):
    cols = _per_slot(samples)
    mu = np.empty(len(cols))
    sd = np.empty(len(cols))
    for k, c in enumerate(cols):
        if c.size < 2:
            raise EstimationError(f"slot {k} has {c.size} sample(s); at least 2 needed")
        mu[k] = c.mean()
        sd[k] = c.std(ddof=1)
    return mu, np.maximum(sd, sigma_floor)


def fit(price_history, sigma_floor=SIGMA_FLOOR):
    """Per-slot sample mean and (floored) sample std.

    ``price_history`` is a (days, slots) array, NaN for missing, or a list
    with one sample sequence per slot.
    """
    mu, sd = _moments(price_history, sigma_floor)
    return PriceModel(mu, sd, sigma_floor)


def fit_deviation(rt_history, da_history, sigma_floor=SIGMA_FLOOR):
    dev = np.asarray(rt_history, dtype=float) - np.asarray(da_history, dtype=float)
    mu, sd = _moments(dev, sigma_floor)
    return DeviationModel(mu, sd)


def anchored(day_ahead, dev, start=0, sigma_floor=SIGMA_FLOOR):
    """Real-time law centred on the day-ahead price plus mean deviation."""
    da = np.asarray(day_ahead, dtype=float)
    if da.ndim != 1 or not np.all(np.isfinite(da)):
        bad = np.flatnonzero(~np.isfinite(da))
        raise EstimationError(f"missing day-ahead price at slot {start + int(bad[0]) if bad.size else start}")
    k = (start + np.arange(da.shape[0])) % dev.period
    return PriceModel(da + dev.mean[k], dev.std[k], sigma_floor, periodic=False, start=start)


def cdf(model, t, x):
    g = model.stage(t)
    return ndtr((np.asarray(x, dtype=float) - g.mu) / g.sigma)


def pdf(model, t, x):
    g = model.stage(t)
    z = (np.asarray(x, dtype=float) - g.mu) / g.sigma
    return np.exp(-0.5 * z * z) / (g.sigma * math.sqrt(2.0 * math.pi))


def gaussian_partial_mean(a, b, mu, sigma):
    """Integral of x f(x) over [a, b] for N(mu, sigma)."""
    za = (a - mu) / sigma
    zb = (b - mu) / sigma
    if za > 0.0:
        mass = ndtr(-za) - ndtr(-zb)
    else:
        mass = ndtr(zb) - ndtr(za)
    phi = lambda z: 0.0 if math.isinf(z) else math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return float(mu * mass - sigma * (phi(zb) - phi(za)))


def truncated_mean(model, t, a, b):
    if a > b:
        raise ValueError("truncated_mean needs a <= b")
    if a == b:
        return 0.0
    g = model.stage(t)
    return gaussian_partial_mean(a, b, g.mu, g.sigma)


def lower_cvar(model, t, alpha):
    """Mean of the lowest (1 - alpha) probability tail."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    g = model.stage(t)
    tail = 1.0 - alpha
    z = ndtri(tail)
    return g.mu - g.sigma * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) / tail


def discrete_lower_cvar(values, probs, alpha):
    """Lower-tail CVaR of a discrete law, splitting the VaR atom."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    tail = 1.0 - alpha
    order = np.argsort(values, kind="stable")
    left = tail
    acc = 0.0
    for i in order:
        take = min(probs[i], left)
        if take <= 0.0:
            break
        acc += take * values[i]
        left -= take
    return acc / tail


def save_model(path, model):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "mu_usd_per_mwh", "sigma_usd_per_mwh"])
        for k in range(model.period):
            w.writerow([k, repr(float(model.mu[k])), repr(float(model.sigma[k]))])


def load_model(path, sigma_floor=SIGMA_FLOOR):
    mu, sd = [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            mu.append(float(row[1]))
            sd.append(float(row[2]))
    return PriceModel(mu, sd, sigma_floor)


@dataclass
class PriceSeries:
    """Realized prices on the slot grid, starting at ``t0``."""

    t0: datetime
    slot_minutes: int
    rt: np.ndarray
    da: np.ndarray

    @property
    def n_slots(self):
        return self.rt.shape[0]


PRICE_HEADER = ["timestamp_iso", "rt_price_usd_per_mwh", "da_price_usd_per_mwh"]


def read_prices(path, slot_minutes=5):
    stamps, rt, da = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        head = next(r, None)
        if head is None or [h.strip() for h in head] != PRICE_HEADER:
            raise ValueError(f"prices CSV header must be {','.join(PRICE_HEADER)}")
        for i, row in enumerate(r, start=1):
            if not row:
                continue
            try:
                ts = datetime.fromisoformat(row[0].strip())
                rt.append(float(row[1]))
                da.append(float(row[2]) if len(row) > 2 and row[2].strip() else math.nan)
            except (ValueError, IndexError) as exc:
                raise ValueError(f"prices row {i}: {exc}") from None
            stamps.append(ts)
    if not stamps:
        raise ValueError("prices CSV has no rows")
    step = timedelta(minutes=slot_minutes)
    for i, ts in enumerate(stamps):
        if ts != stamps[0] + i * step:
            raise ValueError(f"prices row {i + 1}: timestamp {ts.isoformat()} is off the slot grid")
    return PriceSeries(stamps[0], slot_minutes, np.array(rt), np.array(da))


def write_prices(path, series):
    step = timedelta(minutes=series.slot_minutes)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRICE_HEADER)
        for i in range(series.n_slots):
            d = series.da[i]
            w.writerow([
                (series.t0 + i * step).isoformat(),
                f"{series.rt[i]:.6f}",
                "" if not np.isfinite(d) else f"{d:.6f}",
            ])


def by_day(values, slots_per_day):
    """Reshape a slot series into (days, slots_per_day); tail is dropped."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0] // slots_per_day
    return v[: n * slots_per_day].reshape(n, slots_per_day)
