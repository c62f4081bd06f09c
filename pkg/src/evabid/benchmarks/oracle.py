"""Exhaustive backward induction on small instances.

The oracle works on values, not marginals: V_k is tabulated on the M + 1
cell edges y_j = j * delta and every action moves energy by a whole number
of cells. It is deliberately naive so it can serve as ground truth for the
closed-form marginal operators.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from evabid.fleet import FleetEnvelope
from evabid.price_model import DiscretePriceLaw, DiscretePriceModel, discrete_lower_cvar
from evabid.valuation import EnergyGrid, RiskSpec, TrainingConfig, train


@dataclass
class OracleInstance:
    T: int
    M: int
    delta: float
    kb: np.ndarray  # full-charge reach per slot, in cells
    ka: np.ndarray  # full-discharge reach per slot, in cells (>= 0)
    lo: np.ndarray  # edge index of E-(k)
    hi: np.ndarray  # edge index of E+(k)
    need: int
    laws: list
    eta: float = 0.93
    pi_deg: float = 10.0
    chi: float = 1.0e4
    dt: float = 1.0
    limit: bool = True

    def __post_init__(self):
        for k in ("kb", "ka", "lo", "hi"):
            setattr(self, k, np.asarray(getattr(self, k), dtype=np.int64))
        size = (self.M + 1) * int(np.max(self.kb + self.ka) + 1) * max(len(l.atoms) for l in self.laws)
        if self.limit and (self.T > 12 or self.M > 50 or size * self.T >= 10**7):
            raise ValueError("instance too large for exhaustive enumeration")

    # real-unit views for the table trainer
    def grid(self):
        d = self.delta
        return EnergyGrid(0.5 * d, (self.M - 0.5) * d, self.M)

    def envelope(self):
        d = self.delta
        p_plus = self.kb * d / (self.eta * self.dt)
        p_minus = -self.ka * d * self.eta / self.dt
        return FleetEnvelope(self.dt, self.hi * d, self.lo * d, p_plus, p_minus, self.need * d)

    def model(self):
        return DiscretePriceModel(self.laws)

    def refined(self):
        """Same instance on a grid twice as fine."""
        return OracleInstance(
            self.T, 2 * self.M, self.delta / 2, 2 * self.kb, 2 * self.ka, 2 * self.lo,
            2 * self.hi, 2 * self.need, self.laws, self.eta, self.pi_deg, self.chi, self.dt,
            limit=False,
        )

    def to_dict(self):
        return {
            "T": self.T, "M": self.M, "delta": self.delta, "kb": self.kb.tolist(),
            "ka": self.ka.tolist(), "lo": self.lo.tolist(), "hi": self.hi.tolist(),
            "need": self.need, "eta": self.eta, "pi_deg": self.pi_deg, "chi": self.chi,
            "dt": self.dt,
            "laws": [[l.atoms.tolist(), l.probs.tolist()] for l in self.laws],
        }

    @classmethod
    def from_dict(cls, d):
        laws = [DiscretePriceLaw(np.array(a), np.array(p)) for a, p in d["laws"]]
        return cls(d["T"], d["M"], d["delta"], d["kb"], d["ka"], d["lo"], d["hi"], d["need"],
                   laws, d["eta"], d["pi_deg"], d["chi"], d["dt"])


def random_instance(rng, T=None, M=None, n_atoms=None, pi_deg=None):
    T = int(rng.integers(2, 7)) if T is None else T
    M = int(rng.integers(12, 51)) if M is None else M
    n_atoms = int(rng.integers(1, 6)) if n_atoms is None else n_atoms
    kb = rng.integers(1, 5, size=T)
    ka = rng.integers(0, 5, size=T)
    # envelope bands inside the grid, loosely reachable
    lo = np.sort(rng.integers(0, M // 3, size=T))
    hi = np.sort(rng.integers(2 * M // 3, M + 1, size=T))
    need = int(rng.integers(lo[-1], hi[-1] + 1))
    lo[-1] = need
    laws = []
    for _ in range(T):
        atoms = np.sort(rng.uniform(-20.0, 150.0, size=n_atoms))
        probs = rng.dirichlet(np.ones(n_atoms))
        probs = probs / probs.sum()
        laws.append(DiscretePriceLaw(atoms, probs))
    return OracleInstance(
        T, M, float(rng.uniform(0.5, 2.0)), kb, ka, lo, hi, need, laws,
        eta=float(rng.uniform(0.85, 1.0)),
        pi_deg=float(rng.uniform(0.0, 20.0)) if pi_deg is None else pi_deg,
    )


def _extend(V, j):
    """V at integer edge indices j, extrapolated with the end slopes."""
    n = V.shape[0] - 1
    out = np.empty(j.shape)
    inside = (j >= 0) & (j <= n)
    out[inside] = V[j[inside]]
    below = j < 0
    out[below] = V[0] + (V[1] - V[0]) * j[below]
    above = j > n
    out[above] = V[n] + (V[n] - V[n - 1]) * (j[above] - n)
    return out


def _correct(V, lo, hi, chi, delta):
    j = np.arange(V.shape[0])
    c = V[np.clip(j, lo, hi)]
    return c - chi * delta * np.maximum(lo - j, 0)


def _stage_values(inst, V, k, price):
    """max over whole-cell actions of reward + V(y + a) at every edge."""
    j = np.arange(inst.M + 1)
    best = np.full(inst.M + 1, -np.inf)
    for a in range(-int(inst.ka[k]), int(inst.kb[k]) + 1):
        de = a * inst.delta
        if a >= 0:
            r = -price * de / inst.eta
        else:
            r = -inst.eta * (price - inst.pi_deg) * de
        best = np.maximum(best, r + _extend(V, j + a))
    return best


def _backward(inst, risk=None, deterministic=False):
    T, d = inst.T, inst.delta
    y = d * np.arange(inst.M + 1)
    V = -inst.chi * np.maximum(inst.need * d - y, 0.0)
    V = _correct(V, inst.lo[T - 1], inst.hi[T - 1], inst.chi, d)
    out = [None] * T
    out[T - 1] = V
    for k in range(T - 2, -1, -1):
        law = inst.laws[k + 1]
        if deterministic:
            atoms, probs = np.array([law.mean]), np.array([1.0])
        else:
            atoms, probs = law.atoms, law.probs
        S = np.array([_stage_values(inst, V, k + 1, p) for p in atoms])
        mean = probs @ S
        if risk is None or risk.lam == 0.0:
            rho = mean
        else:
            cv = np.array([discrete_lower_cvar(S[:, j], probs, risk.alpha) for j in range(S.shape[1])])
            rho = (1.0 - risk.lam) * mean + risk.lam * cv
        V = _correct(rho, inst.lo[k], inst.hi[k], inst.chi, d)
        out[k] = V
    return np.array(out)


@dataclass
class OracleResult:
    values: np.ndarray  # (T, M + 1) on edges
    marginals: np.ndarray  # (T, M) cell slopes
    delta: float


def _result(inst, V):
    return OracleResult(V, np.diff(V, axis=1) / inst.delta, inst.delta)


def oracle_dp(inst, mode="stochastic"):
    """Exact values and cell-difference marginals.

    ``mode="deterministic"`` replaces each stage law by its mean price.
    """
    if mode not in ("stochastic", "deterministic"):
        raise ValueError("mode must be 'stochastic' or 'deterministic'")
    return _result(inst, _backward(inst, deterministic=mode == "deterministic"))


def oracle_nested_risk(inst, lam, alpha):
    return _result(inst, _backward(inst, risk=RiskSpec(lam, alpha)))


def richardson_check(inst, mode="stochastic"):
    """Max gap between values on the coarse grid and on a grid twice as fine.

    Action reach and envelope limits sit on coarse edges, so both grids
    describe the same problem and the gap should be round-off only.
    """
    coarse = oracle_dp(inst, mode).values
    fine = oracle_dp(inst.refined(), mode).values[:, ::2]
    return float(np.max(np.abs(coarse - fine)))


def train_on_instance(inst, risk=None, deterministic=False):
    """Marginal table from the closed-form operators on an oracle instance."""
    cfg = TrainingConfig(
        H=inst.T if deterministic else 0, chi=inst.chi, M=inst.M, eta=inst.eta,
        pi_deg=inst.pi_deg, dt=inst.dt, risk=risk,
    )
    path = [inst.laws[k + 1].mean for k in range(inst.T - 1)]
    return train(inst.envelope(), cfg, inst.model(), path if deterministic else None, grid=inst.grid())


def write_fixture(path, inst, result, label):
    """CSV regression fixture; the first line carries the instance as JSON."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps({"label": label, "instance": inst.to_dict()}) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "cell", "marginal"])
        for k in range(result.marginals.shape[0]):
            for m in range(result.marginals.shape[1]):
                w.writerow([k, m, repr(float(result.marginals[k, m]))])


def read_fixture(path):
    with open(path, encoding="utf-8") as fh:
        head = json.loads(fh.readline()[2:])
        rows = list(csv.reader(fh))[1:]
    inst = OracleInstance.from_dict(head["instance"])
    marg = np.zeros((inst.T, inst.M))
    for k, m, v in rows:
        marg[int(k), int(m)] = float(v)
    return head["label"], inst, marg
