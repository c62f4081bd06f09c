"""Post-decision marginal value tables and the backward operators.

Grid convention: the M grid points are the midpoints of M equal cells of
width delta, and the stored value at a point is the slope of the
post-decision value over its cell. With power limits that shift energy by
whole cells this makes every operator exact against an enumeration DP on
the cell edges.

``values[k]`` is the marginal value of energy held at the end of local
slot k; it is produced from ``values[k + 1]`` with the price law and the
power bounds of slot k + 1, then corrected with E-/E+ of slot k.
"""

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from evabid import kernels
from evabid.price_model import DiscretePriceLaw, Gaussian

CHI_DEFAULT = 1.0e4


class MonotonicityError(RuntimeError):
    pass


class OutOfSpanWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EnergyGrid:
    lo: float
    hi: float
    M: int

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("grid needs at least 2 points")
        if not self.hi > self.lo:
            raise ValueError("grid needs hi > lo")

    @property
    def delta(self):
        return (self.hi - self.lo) / (self.M - 1)

    @property
    def points(self):
        return self.lo + self.delta * np.arange(self.M)

    @classmethod
    def spanning(cls, env, M):
        lo = min(float(env.E_minus.min(initial=0.0)), 0.0)
        hi = max(float(env.E_plus.max(initial=0.0)), 0.0)
        if hi - lo < 1e-6:
            hi = lo + 1.0
        return cls(lo, hi, M)

    def position(self, e):
        return (np.asarray(e, dtype=float) - self.lo) / self.delta


@dataclass(frozen=True)
class Physics:
    eta: float = 0.93
    pi_deg: float = 10.0
    dt: float = 1.0 / 12.0
    chi: float = CHI_DEFAULT

    def shifts(self, grid, p_plus, p_minus):
        """Full-charge and full-discharge energy shifts in cell units."""
        kb = self.eta * p_plus * self.dt / grid.delta
        ka = -p_minus * self.dt / (self.eta * grid.delta)
        return float(kb), float(ka)


@dataclass(frozen=True)
class RiskSpec:
    lam: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass
class TrainingConfig:
    H: int = 0
    chi: float = CHI_DEFAULT
    M: int = 1000
    eta: float = 0.93
    pi_deg: float = 10.0
    dt: float = 1.0 / 12.0
    risk: RiskSpec = None
    strict: bool = True

    @property
    def physics(self):
        return Physics(self.eta, self.pi_deg, self.dt, self.chi)

    def digest(self):
        d = asdict(self)
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


def terminal_condition(E_need, chi, grid):
    return np.where(grid.points < E_need, chi, 0.0)


def boundary_correct(v, grid, e_lo, e_hi, chi):
    x = grid.points
    v = np.where(x < e_lo, chi, v)
    return np.where(x >= e_hi, 0.0, v)


def _finish(v, grid, e_lo, e_hi, chi, strict):
    if e_lo is not None:
        v = boundary_correct(v, grid, e_lo, e_hi, chi)
    rise = float(np.max(np.diff(v), initial=0.0))
    if rise > 1e-9 * max(1.0, float(np.max(np.abs(v)))):
        if strict:
            raise MonotonicityError(f"stage output rises by {rise:.3e} before projection")
        warnings.warn(f"stage output rises by {rise:.3e}; projected", RuntimeWarning)
    if rise > 0.0:
        v = kernels.isotonic_nonincreasing(np.ascontiguousarray(v))
    return np.maximum(v, 0.0)


def _interp(u, pos):
    m = u.shape[0]
    pos = min(max(pos, 0.0), m - 1.0)
    lo = min(int(math.floor(pos)), m - 2)
    w = pos - lo
    return float(u[lo] * (1.0 - w) + u[lo + 1] * w)


def thresholds(u, grid, e, p_plus, p_minus, phys):
    """(uc, u0, ud) and a1..a4 at energy e."""
    kb, ka = phys.shifts(grid, p_plus, p_minus)
    pos = float(grid.position(e))
    uc = _interp(u, pos + kb)
    u0 = _interp(u, pos)
    ud = _interp(u, pos - ka)
    a = (phys.eta * uc, phys.eta * u0, u0 / phys.eta + phys.pi_deg, ud / phys.eta + phys.pi_deg)
    return (uc, u0, ud), a


def stage_marginal(u, grid, e, price, p_plus, p_minus, phys, tol=1e-9):
    """Five-case marginal value at energy e for a known price."""
    (uc, u0, ud), (a1, a2, a3, a4) = thresholds(u, grid, e, p_plus, p_minus, phys)
    scale = tol * max(1.0, abs(uc), abs(ud))
    if a1 > a2 + scale or a2 > a3 + scale or a3 > a4 + scale:
        raise MonotonicityError("threshold ordering a1 <= a2 <= a3 <= a4 violated")
    if price <= a1:
        return uc
    if price < a2:
        return price / phys.eta
    if price <= a3:
        return u0
    if price < a4:
        return phys.eta * (price - phys.pi_deg)
    return ud


@dataclass(frozen=True)
class MarginalDistribution:
    """Law of the stage marginal at one energy for a Gaussian price."""

    thresholds: tuple
    values: tuple
    probs: tuple

    def total(self):
        return sum(self.probs)


def marginal_distribution(u, grid, e, law, p_plus, p_minus, phys):
    (uc, u0, ud), a = thresholds(u, grid, e, p_plus, p_minus, phys)
    F = [float(ndtr((x - law.mu) / law.sigma)) for x in a]
    probs = (F[0], F[1] - F[0], F[2] - F[1], F[3] - F[2], 1.0 - F[3])
    return MarginalDistribution(tuple(a), (uc, "price/eta", u0, "eta*(price-pi_deg)", ud), probs)


def _law(model, t):
    if isinstance(model, (Gaussian, DiscretePriceLaw)):
        return model
    return model.stage(t)


def step_deterministic(u, price, grid, p_plus, p_minus, phys, e_lo=None, e_hi=None, strict=True):
    kb, ka = phys.shifts(grid, p_plus, p_minus)
    v = kernels.marginal_known_price(u, kb, ka, phys.eta, phys.pi_deg, float(price))
    return _finish(v, grid, e_lo, e_hi, phys.chi, strict)


def _expected_marginal(u, law, kb, ka, phys):
    if isinstance(law, DiscretePriceLaw):
        v = np.zeros_like(u)
        for x, p in zip(law.atoms, law.probs):
            if p > 0.0:
                v += p * kernels.marginal_known_price(u, kb, ka, phys.eta, phys.pi_deg, float(x))
        return v
    return kernels.marginal_gaussian(u, kb, ka, phys.eta, phys.pi_deg, law.mu, law.sigma)


def step_stochastic(u, law, grid, p_plus, p_minus, phys, e_lo=None, e_hi=None, strict=True):
    kb, ka = phys.shifts(grid, p_plus, p_minus)
    v = _expected_marginal(u, law, kb, ka, phys)
    return _finish(v, grid, e_lo, e_hi, phys.chi, strict)


def tail_marginal(u, law, kb, ka, grid, phys, alpha):
    """Cell slopes of the lower-tail CVaR of the stage value."""
    dx = grid.delta
    if isinstance(law, DiscretePriceLaw):
        c = kernels.edge_cvar_discrete(u, dx, kb, ka, phys.eta, phys.pi_deg, law.atoms, law.probs, alpha)
    else:
        c = kernels.edge_cvar_gaussian(
            u, dx, kb, ka, phys.eta, phys.pi_deg, law.mu, law.sigma, alpha,
            float(ndtri(0.5 * alpha)), float(ndtri(1.0 - 0.5 * alpha)),
        )
    return u + np.diff(c) / dx


def step_risk_averse(u, law, grid, p_plus, p_minus, phys, lam, alpha, e_lo=None, e_hi=None, strict=True):
    kb, ka = phys.shifts(grid, p_plus, p_minus)
    v = _expected_marginal(u, law, kb, ka, phys)
    if lam > 0.0:
        v = (1.0 - lam) * v + lam * tail_marginal(u, law, kb, ka, grid, phys, alpha)
    return _finish(v, grid, e_lo, e_hi, phys.chi, strict)


def stage_value_lines(u, grid, e, p_plus, p_minus, phys):
    """Lines (A, B) with S(e; pi) - U(e) = max_i A_i + B_i pi at energy e.

    U is the antiderivative of the cell-constant marginal; candidate
    post-decision energies are the reach limits, the idle point and every
    cell edge in between.
    """
    b = phys.eta * p_plus * phys.dt
    a = p_minus * phys.dt / phys.eta
    d = grid.delta
    first_edge = grid.lo - 0.5 * d
    edges = first_edge + d * np.arange(grid.M + 1)
    ys = np.concatenate([[e + b], edges[(edges > e) & (edges < e + b)][::-1], [e],
                         edges[(edges < e) & (edges > e + a)][::-1], [e + a]])
    ys = ys[np.r_[True, np.diff(ys) < 0]]

    def U(y):
        # antiderivative from the first edge, constant extrapolation
        pos = (y - first_edge) / d
        k = int(np.clip(np.floor(pos), 0, grid.M - 1))
        if pos <= 0:
            return u[0] * (y - first_edge)
        if pos >= grid.M:
            return float(np.sum(u) * d + u[-1] * (y - edges[-1]))
        return float(np.sum(u[:k]) * d + u[k] * (y - edges[k]))

    u_e = U(e)
    A, B = [], []
    for y in ys:
        dd = y - e
        rel = U(y) - u_e
        if dd > 0:
            A.append(rel)
            B.append(-dd / phys.eta)
        else:
            A.append(rel + phys.eta * phys.pi_deg * dd)
            B.append(-phys.eta * dd)
    return np.array(A), np.array(B)


def risk_tail_interval(u, law, grid, e, p_plus, p_minus, phys, alpha, tol=1e-10):
    """Price interval (l, r) of probability 1 - alpha with the lowest stage value."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not isinstance(law, Gaussian):
        raise TypeError("risk_tail_interval needs a Gaussian law")
    A, B = stage_value_lines(u, grid, e, p_plus, p_minus, phys)
    tail = 1.0 - alpha

    def S(x):
        return float(np.max(A + B * x))

    def bounds(q):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (q - A) / B
        lo = np.max(t[B < 0], initial=-np.inf)
        hi = np.min(t[B > 0], initial=np.inf)
        return lo, hi

    def mass(q):
        lo, hi = bounds(q)
        return float(ndtr((hi - law.mu) / law.sigma) - ndtr((lo - law.mu) / law.sigma))

    q_lo = 0.0
    q_hi = max(S(law.mu + law.sigma * ndtri(0.5 * alpha)), S(law.mu + law.sigma * ndtri(1.0 - 0.5 * alpha)), 0.0)
    if mass(q_lo) >= tail:
        # the idle piece alone carries enough mass; centre on it
        lo, hi = bounds(0.0)
        F_lo = ndtr((lo - law.mu) / law.sigma)
        F_hi = ndtr((hi - law.mu) / law.sigma)
        spare = (F_hi - F_lo - tail) / 2.0
        return (law.mu + law.sigma * float(ndtri(F_lo + spare)),
                law.mu + law.sigma * float(ndtri(F_hi - spare)))
    for _ in range(200):
        q = 0.5 * (q_lo + q_hi)
        if mass(q) >= tail:
            q_hi = q
        else:
            q_lo = q
        if q_hi - q_lo <= 1e-14 * max(1.0, q_hi):
            break
    lo, hi = bounds(q_hi)
    if abs(mass(q_hi) - tail) > max(tol, 1e-8):
        raise MonotonicityError("tail interval mass not matched")
    return float(lo), float(hi)


@dataclass
class ValueTable:
    grid: EnergyGrid
    values: np.ndarray
    chi: float = CHI_DEFAULT
    start: int = 0
    risk: RiskSpec = None
    meta: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def risk_adjusted(self):
        return self.risk is not None and self.risk.lam > 0.0

    def query(self, t, e):
        return query(self, t, e)


def query(table, t, e, warn=True):
    g = table.grid
    pos = float(g.position(e))
    if pos < -1e-9 or pos > g.M - 1 + 1e-9:
        if warn:
            warnings.warn(f"energy {e} outside table span [{g.lo}, {g.hi}]; clamped", OutOfSpanWarning)
    return _interp(table.values[t], pos)


def train(envelope, config, model, forecast_path=None, grid=None):
    """Backward training of a table over the envelope's slots.

    Local slots k < H use the deterministic operator on ``forecast_path[k]``
    (the price of slot k + 1); the rest use the distribution from ``model``
    at global slot ``envelope.start + k + 1``.
    """
    T = envelope.n_slots
    H = int(config.H)
    if T < 1:
        raise ValueError("envelope has no slots")
    if H > 0 and (forecast_path is None or len(forecast_path) < min(H, T - 1)):
        raise ValueError("forecast_path shorter than H")
    if grid is None:
        grid = EnergyGrid.spanning(envelope, config.M)
    phys = config.physics
    risk = config.risk
    vals = np.empty((T, grid.M))
    em, ep = envelope.E_minus, envelope.E_plus
    u = terminal_condition(envelope.E_need, phys.chi, grid)
    u = _finish(u, grid, em[T - 1], ep[T - 1], phys.chi, config.strict)
    vals[T - 1] = u
    pp, pm = envelope.P_plus, envelope.P_minus
    for k in range(T - 2, -1, -1):
        if k < H:
            u = step_deterministic(u, forecast_path[k], grid, pp[k + 1], pm[k + 1], phys, em[k], ep[k], config.strict)
        else:
            law = _law(model, envelope.start + k + 1)
            if risk is not None and risk.lam > 0.0:
                u = step_risk_averse(u, law, grid, pp[k + 1], pm[k + 1], phys, risk.lam, risk.alpha,
                                     em[k], ep[k], config.strict)
            else:
                u = step_stochastic(u, law, grid, pp[k + 1], pm[k + 1], phys, em[k], ep[k], config.strict)
        vals[k] = u
    meta = {"config_digest": config.digest(), "H": H}
    return ValueTable(grid, vals, phys.chi, envelope.start, risk, meta)


def save_table(path, table):
    """Flat CSV ``stage,energy_kwh,v_post`` plus a ``.json`` sidecar."""
    x = table.grid.points
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("stage,energy_kwh,v_post\n")
        xs = [repr(float(v)) for v in x]
        for k in range(table.T):
            row = table.values[k].tolist()
            for m in range(table.grid.M):
                fh.write(f"{k},{xs[m]},{row[m]!r}\n")
    side = {
        "grid": {"lo": float(table.grid.lo), "hi": float(table.grid.hi), "M": int(table.grid.M)},
        "chi": table.chi,
        "start": table.start,
        "risk": None if table.risk is None else asdict(table.risk),
        "meta": table.meta,
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)


def load_table(path):
    with open(str(path) + ".json", encoding="utf-8") as fh:
        side = json.load(fh)
    g = side["grid"]
    grid = EnergyGrid(float(g["lo"]), float(g["hi"]), int(g["M"]))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    T = int(data[:, 0].max()) + 1
    vals = data[:, 2].reshape(T, grid.M)
    risk = None if side["risk"] is None else RiskSpec(**side["risk"])
    return ValueTable(grid, vals, side["chi"], side["start"], risk, side.get("meta", {}))
