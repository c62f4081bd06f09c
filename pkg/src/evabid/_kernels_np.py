"""Pure-numpy implementations of the hot kernels.

All kernels work on a uniform energy grid in index units: ``kb`` is the
full-charge energy shift and ``ka`` the full-discharge shift, both expressed
as (possibly fractional) multiples of the grid spacing and both >= 0.
"""

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.special import ndtr

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _phi(z):
    with np.errstate(over="ignore"):
        return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def _mass(za, zb):
    """P(za < Z < zb) for a standard normal, accurate in both tails."""
    za = np.asarray(za, dtype=float)
    zb = np.asarray(zb, dtype=float)
    upper = ndtr(-za) - ndtr(-zb)
    lower = ndtr(zb) - ndtr(za)
    return np.where(za > 0.0, upper, lower)


def _partial_mean(a, b, mu, sigma):
    """Integral of x f(x) over (a, b) for N(mu, sigma)."""
    za = (a - mu) / sigma
    zb = (b - mu) / sigma
    return mu * _mass(za, zb) - sigma * (_phi(zb) - _phi(za))


def _interp_index(u, pos):
    """Linear interpolation of u at fractional indices, constant outside."""
    m = u.shape[0]
    pos = np.clip(pos, 0.0, m - 1.0)
    lo = np.minimum(np.floor(pos).astype(np.int64), m - 1)
    hi = np.minimum(lo + 1, m - 1)
    w = pos - lo
    return u[lo] * (1.0 - w) + u[hi] * w


def _shifted(u, kb, ka):
    idx = np.arange(u.shape[0], dtype=float)
    return _interp_index(u, idx + kb), _interp_index(u, idx - ka)


def marginal_known_price(u, kb, ka, eta, pdeg, price):
    """Five-case stage marginal at every grid point for one known price."""
    uc, ud = _shifted(u, kb, ka)
    a1 = eta * uc
    a2 = eta * u
    a3 = u / eta + pdeg
    a4 = ud / eta + pdeg
    out = np.where(price <= a1, uc, price / eta)
    out = np.where(price >= a2, u, out)
    out = np.where(price > a3, eta * (price - pdeg), out)
    out = np.where(price >= a4, ud, out)
    return out


def marginal_gaussian(u, kb, ka, eta, pdeg, mu, sigma):
    """Expected stage marginal under N(mu, sigma), closed form."""
    uc, ud = _shifted(u, kb, ka)
    a1 = eta * uc
    a2 = eta * u
    a3 = u / eta + pdeg
    a4 = ud / eta + pdeg
    z1 = (a1 - mu) / sigma
    z2 = (a2 - mu) / sigma
    z3 = (a3 - mu) / sigma
    z4 = (a4 - mu) / sigma
    return (
        uc * ndtr(z1)
        + _partial_mean(a1, a2, mu, sigma) / eta
        + u * _mass(z2, z3)
        + eta * (_partial_mean(a3, a4, mu, sigma) - pdeg * _mass(z3, z4))
        + ud * ndtr(-z4)
    )


def displacements(kb, ka):
    """Candidate post-decision offsets (index units), descending.

    Interior grid edges strictly inside the reachable range plus the two
    reach limits and the idle point.
    """
    up = []
    if kb > 0.0:
        n_up = int(np.ceil(kb - 1e-12)) - 1
        up = [kb] + list(range(n_up, 0, -1))
    dn = []
    if ka > 0.0:
        n_dn = int(np.ceil(ka - 1e-12)) - 1
        dn = [-float(i) for i in range(1, n_dn + 1)] + [-ka]
    return np.array(up + [0.0] + dn, dtype=float)


def edge_lines(u, dx, kb, ka, eta, pdeg):
    """Stage-value lines S(y; pi) = max_i A_i + B_i pi at every grid edge.

    Edges sit half a cell below/above the grid points (M + 1 of them). The
    post-decision value is the antiderivative of the cell-constant marginal
    and is measured relative to its value at the edge itself.
    """
    m = u.shape[0]
    ds = displacements(kb, ka)
    j = np.arange(m + 1)
    n_up = int(np.sum(ds > 0.0)) - 1 if kb > 0.0 else -1
    n_dn = int(np.sum(ds < 0.0)) - 1 if ka > 0.0 else -1
    cols = []
    if n_up >= 0:
        cells = np.clip(j[:, None] + np.arange(n_up + 1)[None, :], 0, m - 1)
        vals = u[cells] * dx
        cum = np.concatenate([np.zeros((m + 1, 1)), np.cumsum(vals[:, :n_up], axis=1)], axis=1)
        top = cum[:, n_up] + (kb - n_up) * vals[:, n_up]
        cols.append(top[:, None])
        if n_up > 0:
            cols.append(cum[:, n_up:0:-1])
    cols.append(np.zeros((m + 1, 1)))
    if n_dn >= 0:
        cells = np.clip(j[:, None] - 1 - np.arange(n_dn + 1)[None, :], 0, m - 1)
        vals = u[cells] * dx
        cum = np.concatenate([np.zeros((m + 1, 1)), np.cumsum(vals[:, :n_dn], axis=1)], axis=1)
        if n_dn > 0:
            cols.append(-cum[:, 1:])
        bot = cum[:, n_dn] + (ka - n_dn) * vals[:, n_dn]
        cols.append(-bot[:, None])
    a = np.concatenate(cols, axis=1)
    de = ds * dx
    b = np.where(ds > 0.0, -de / eta, -eta * de)
    a = a + np.where(ds < 0.0, eta * pdeg * de, 0.0)[None, :]
    return a, b


def _pieces(a, b):
    """Interval on which each line is the maximum (empty when dominated).

    Slopes must be strictly increasing.
    """
    k = b.shape[0]
    db = b[None, :] - b[:, None]  # [i, j] = b_j - b_i
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (a[:, :, None] - a[:, None, :]) / db[None, :, :]
    below = np.tril(np.ones((k, k), dtype=bool), -1)[None, :, :]  # j < i
    above = np.triu(np.ones((k, k), dtype=bool), 1)[None, :, :]
    left = np.max(np.where(below, x, -np.inf), axis=2)
    right = np.min(np.where(above, x, np.inf), axis=2)
    return left, right


def _level_bounds(q, a, b, neg, pos):
    """Interval {pi : max_i A_i + B_i pi <= q} for each row."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (q[:, None] - a) / b[None, :]
    lo = np.max(np.where(neg[None, :], t, -np.inf), axis=1) if neg.any() else np.full(q.shape, -np.inf)
    hi = np.min(np.where(pos[None, :], t, np.inf), axis=1) if pos.any() else np.full(q.shape, np.inf)
    return lo, hi


def edge_cvar_gaussian(u, dx, kb, ka, eta, pdeg, mu, sigma, alpha, z_lo, z_hi):
    """Lower-tail CVaR of the local stage value at each edge, N(mu, sigma)."""
    a, b = edge_lines(u, dx, kb, ka, eta, pdeg)
    tail = 1.0 - alpha
    neg = b < 0.0
    pos = b > 0.0
    pi_lo = mu + sigma * z_lo
    pi_hi = mu + sigma * z_hi
    s_lo = np.max(a + b[None, :] * pi_lo, axis=1)
    s_hi = np.max(a + b[None, :] * pi_hi, axis=1)
    q_lo = np.zeros(a.shape[0])
    q_hi = np.maximum(np.maximum(s_lo, s_hi), 0.0)
    for _ in range(80):
        q = 0.5 * (q_lo + q_hi)
        lo, hi = _level_bounds(q, a, b, neg, pos)
        mass = _mass((lo - mu) / sigma, (hi - mu) / sigma)
        big = mass >= tail
        q_hi = np.where(big, q, q_hi)
        q_lo = np.where(big, q_lo, q)
    q = q_hi
    lo, hi = _level_bounds(q, a, b, neg, pos)
    left, right = _pieces(a, b)
    left = np.maximum(left, lo[:, None])
    right = np.minimum(right, hi[:, None])
    right = np.maximum(right, left)
    zl = (left - mu) / sigma
    zr = (right - mu) / sigma
    mass = _mass(zl, zr)
    pm = mu * mass - sigma * (_phi(zr) - _phi(zl))
    shortfall = np.sum((q[:, None] - a) * mass - b[None, :] * pm, axis=1)
    return q - shortfall / tail


def edge_cvar_discrete(u, dx, kb, ka, eta, pdeg, atoms, probs, alpha):
    """Lower-tail CVaR of the local stage value at each edge, discrete law."""
    a, b = edge_lines(u, dx, kb, ka, eta, pdeg)
    s = np.max(a[:, :, None] + b[None, :, None] * atoms[None, None, :], axis=1)
    order = np.argsort(s, axis=1, kind="stable")
    s_sorted = np.take_along_axis(s, order, axis=1)
    w_sorted = probs[order]
    tail = 1.0 - alpha
    before = np.cumsum(w_sorted, axis=1) - w_sorted
    take = np.clip(tail - before, 0.0, None)
    take = np.minimum(take, w_sorted)
    return np.sum(take * s_sorted, axis=1) / tail


def isotonic_nonincreasing(v):
    """L2 projection onto non-increasing sequences."""
    return isotonic_regression(np.asarray(v, dtype=float), increasing=False).x


def deterministic_chain(u, prices, kbs, kas, e_los, e_his, x, chi, eta, pdeg):
    """Apply known-price steps in order, each followed by boundary repair."""
    for i in range(prices.shape[0]):
        u = marginal_known_price(u, kbs[i], kas[i], eta, pdeg, prices[i])
        u = np.where(x < e_los[i], chi, u)
        u = np.where(x >= e_his[i], 0.0, u)
        if np.any(np.diff(u) > 0.0):
            u = isotonic_nonincreasing(u)
    return u
