"""Numba-compiled versions of the kernels in ``_kernels_np``.

Same signatures and conventions; see that module for the meaning of the
index-unit shifts ``kb`` and ``ka``.
"""

import math

import numpy as np
from numba import njit

from evabid._kernels_np import displacements

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit(cache=True)
def _ndtr(z):
    return 0.5 * math.erfc(-z / _SQRT2)


@njit(cache=True)
def _phi(z):
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


@njit(cache=True)
def _mass(za, zb):
    if za > 0.0:
        return _ndtr(-za) - _ndtr(-zb)
    return _ndtr(zb) - _ndtr(za)


@njit(cache=True)
def _partial_mean(a, b, mu, sigma):
    za = (a - mu) / sigma
    zb = (b - mu) / sigma
    return mu * _mass(za, zb) - sigma * (_phi(zb) - _phi(za))


@njit(cache=True)
def _interp(u, pos):
    m = u.shape[0]
    if pos <= 0.0:
        return u[0]
    if pos >= m - 1.0:
        return u[m - 1]
    lo = int(math.floor(pos))
    w = pos - lo
    return u[lo] * (1.0 - w) + u[lo + 1] * w


@njit(cache=True)
def marginal_known_price(u, kb, ka, eta, pdeg, price):
    m = u.shape[0]
    out = np.empty(m)
    for i in range(m):
        uc = _interp(u, i + kb)
        ud = _interp(u, i - ka)
        u0 = u[i]
        if price <= eta * uc:
            out[i] = uc
        elif price < eta * u0:
            out[i] = price / eta
        elif price <= u0 / eta + pdeg:
            out[i] = u0
        elif price < ud / eta + pdeg:
            out[i] = eta * (price - pdeg)
        else:
            out[i] = ud
    return out


@njit(cache=True)
def marginal_gaussian(u, kb, ka, eta, pdeg, mu, sigma):
    m = u.shape[0]
    out = np.empty(m)
    for i in range(m):
        uc = _interp(u, i + kb)
        ud = _interp(u, i - ka)
        u0 = u[i]
        a1 = eta * uc
        a2 = eta * u0
        a3 = u0 / eta + pdeg
        a4 = ud / eta + pdeg
        z1 = (a1 - mu) / sigma
        z2 = (a2 - mu) / sigma
        z3 = (a3 - mu) / sigma
        z4 = (a4 - mu) / sigma
        out[i] = (
            uc * _ndtr(z1)
            + _partial_mean(a1, a2, mu, sigma) / eta
            + u0 * _mass(z2, z3)
            + eta * (_partial_mean(a3, a4, mu, sigma) - pdeg * _mass(z3, z4))
            + ud * _ndtr(-z4)
        )
    return out


@njit(cache=True)
def _fill_lines(u, dx, j, ds, n_up, n_dn, kb, ka, eta, pdeg, a, b):
    m = u.shape[0]
    k = ds.shape[0]
    pos = 0
    if n_up >= 0:
        acc = 0.0
        tmp = np.empty(n_up + 1)
        for i in range(n_up):
            c = min(max(j + i, 0), m - 1)
            acc += u[c] * dx
            tmp[i + 1] = acc
        c = min(max(j + n_up, 0), m - 1)
        a[pos] = acc + (kb - n_up) * u[c] * dx
        pos += 1
        for i in range(n_up, 0, -1):
            a[pos] = tmp[i]
            pos += 1
    a[pos] = 0.0
    pos += 1
    if n_dn >= 0:
        acc = 0.0
        for i in range(n_dn):
            c = min(max(j - 1 - i, 0), m - 1)
            acc += u[c] * dx
            a[pos] = -acc
            pos += 1
        c = min(max(j - 1 - n_dn, 0), m - 1)
        a[pos] = -(acc + (ka - n_dn) * u[c] * dx)
        pos += 1
    for i in range(k):
        de = ds[i] * dx
        if ds[i] > 0.0:
            b[i] = -de / eta
        else:
            b[i] = -eta * de
            a[i] += eta * pdeg * de


@njit(cache=True)
def _hull(a, b, ha, hb, br):
    """Upper envelope of lines with ascending slopes; returns its size."""
    k = a.shape[0]
    h = 0
    for i in range(k):
        ai = a[i]
        bi = b[i]
        if h > 0 and bi == hb[h - 1]:
            if ai <= ha[h - 1]:
                continue
            h -= 1
        while h > 0:
            x = (ha[h - 1] - ai) / (bi - hb[h - 1])
            if h > 1 and x <= br[h - 2]:
                h -= 1
            else:
                break
        if h > 0:
            br[h - 1] = (ha[h - 1] - ai) / (bi - hb[h - 1])
        ha[h] = ai
        hb[h] = bi
        h += 1
    return h


@njit(cache=True)
def _level(q, a, b, br, i0):
    """Level-set bounds and their pieces for the convex lines at level q."""
    k = a.shape[0]
    if i0 == 0:
        lo = -np.inf
        il = 0
    else:
        il = 0
        for i in range(i0 - 1, 0, -1):
            if a[i] + b[i] * br[i - 1] >= q:
                il = i
                break
        lo = (q - a[il]) / b[il]
    if i0 == k - 1:
        hi = np.inf
        ir = k - 1
    else:
        ir = k - 1
        for i in range(i0 + 1, k - 1):
            if a[i] + b[i] * br[i] >= q:
                ir = i
                break
        hi = (q - a[ir]) / b[ir]
    return lo, hi, il, ir


@njit(cache=True)
def _cvar_gauss_lines(a, b, br, i0, mu, sigma, tail, pi_lo, pi_hi):
    k = a.shape[0]
    left0 = -np.inf if i0 == 0 else br[i0 - 1]
    right0 = np.inf if i0 == k - 1 else br[i0]
    idle = a[i0] == 0.0 and b[i0] == 0.0
    if idle and _mass((left0 - mu) / sigma, (right0 - mu) / sigma) >= tail:
        return 0.0
    s1 = -np.inf
    s2 = -np.inf
    for i in range(k):
        v1 = a[i] + b[i] * pi_lo
        v2 = a[i] + b[i] * pi_hi
        if v1 > s1:
            s1 = v1
        if v2 > s2:
            s2 = v2
    q_lo = 0.0
    q_hi = max(s1, s2, 0.0)
    q = 0.5 * q_hi
    for _ in range(200):
        lo, hi, il, ir = _level(q, a, b, br, i0)
        zl = (lo - mu) / sigma
        zr = (hi - mu) / sigma
        g = _mass(zl, zr) - tail
        if g >= 0.0:
            q_hi = q
        else:
            q_lo = q
        if abs(g) <= 1e-15:
            q_hi = q
            break
        if q_hi - q_lo <= 1e-13 * max(1.0, q_hi):
            break
        d = 0.0
        if i0 != k - 1:
            d += _phi(zr) / sigma / b[ir]
        if i0 != 0:
            d -= _phi(zl) / sigma / b[il]
        qn = q - g / d if d > 0.0 else -1.0
        if not (q_lo < qn < q_hi):
            qn = 0.5 * (q_lo + q_hi)
        q = qn
    q = q_hi
    lo, hi, il, ir = _level(q, a, b, br, i0)
    short = 0.0
    for i in range(il, ir + 1):
        left = -np.inf if i == 0 else br[i - 1]
        right = np.inf if i == k - 1 else br[i]
        if left < lo:
            left = lo
        if right > hi:
            right = hi
        if right <= left:
            continue
        zl = (left - mu) / sigma
        zr = (right - mu) / sigma
        ms = _mass(zl, zr)
        pm = mu * ms - sigma * (_phi(zr) - _phi(zl))
        short += (q - a[i]) * ms - b[i] * pm
    return q - short / tail


@njit(cache=True)
def _edge_cvar_gauss(u, dx, ds, n_up, n_dn, kb, ka, eta, pdeg, mu, sigma, alpha, z_lo, z_hi):
    m = u.shape[0]
    k = ds.shape[0]
    a = np.empty(k)
    b = np.empty(k)
    ha = np.empty(k)
    hb = np.empty(k)
    br = np.empty(max(k - 1, 1))
    out = np.empty(m + 1)
    tail = 1.0 - alpha
    pi_lo = mu + sigma * z_lo
    pi_hi = mu + sigma * z_hi
    for j in range(m + 1):
        _fill_lines(u, dx, j, ds, n_up, n_dn, kb, ka, eta, pdeg, a, b)
        h = _hull(a, b, ha, hb, br)
        if h == 1:
            out[j] = 0.0
            continue
        i0 = h - 1
        for i in range(h):
            if hb[i] >= 0.0:
                i0 = i
                break
        out[j] = _cvar_gauss_lines(ha[:h], hb[:h], br[:h - 1], i0, mu, sigma, tail, pi_lo, pi_hi)
    return out


@njit(cache=True)
def _edge_cvar_disc(u, dx, ds, n_up, n_dn, kb, ka, eta, pdeg, atoms, probs, alpha):
    m = u.shape[0]
    k = ds.shape[0]
    n = atoms.shape[0]
    a = np.empty(k)
    b = np.empty(k)
    s = np.empty(n)
    out = np.empty(m + 1)
    tail = 1.0 - alpha
    for j in range(m + 1):
        _fill_lines(u, dx, j, ds, n_up, n_dn, kb, ka, eta, pdeg, a, b)
        for t in range(n):
            best = -np.inf
            for i in range(k):
                v = a[i] + b[i] * atoms[t]
                if v > best:
                    best = v
            s[t] = best
        order = np.argsort(s, kind="mergesort")
        acc = 0.0
        left = tail
        for t in range(n):
            w = probs[order[t]]
            take = min(w, left)
            if take <= 0.0:
                break
            acc += take * s[order[t]]
            left -= take
        out[j] = acc / tail
    return out


def _counts(ds, kb, ka):
    n_up = int(np.sum(ds > 0.0)) - 1 if kb > 0.0 else -1
    n_dn = int(np.sum(ds < 0.0)) - 1 if ka > 0.0 else -1
    return n_up, n_dn


def edge_cvar_gaussian(u, dx, kb, ka, eta, pdeg, mu, sigma, alpha, z_lo, z_hi):
    ds = displacements(kb, ka)
    n_up, n_dn = _counts(ds, kb, ka)
    return _edge_cvar_gauss(
        np.ascontiguousarray(u, dtype=np.float64), float(dx), ds, n_up, n_dn,
        float(kb), float(ka), float(eta), float(pdeg), float(mu), float(sigma),
        float(alpha), float(z_lo), float(z_hi),
    )


def edge_cvar_discrete(u, dx, kb, ka, eta, pdeg, atoms, probs, alpha):
    ds = displacements(kb, ka)
    n_up, n_dn = _counts(ds, kb, ka)
    return _edge_cvar_disc(
        np.ascontiguousarray(u, dtype=np.float64), float(dx), ds, n_up, n_dn,
        float(kb), float(ka), float(eta), float(pdeg),
        np.ascontiguousarray(atoms, dtype=np.float64),
        np.ascontiguousarray(probs, dtype=np.float64), float(alpha),
    )


@njit(cache=True)
def isotonic_nonincreasing(v):
    """Pool-adjacent-violators projection onto non-increasing sequences."""
    n = v.shape[0]
    vals = np.empty(n)
    wts = np.empty(n)
    ends = np.empty(n, dtype=np.int64)
    top = 0
    for i in range(n):
        vals[top] = v[i]
        wts[top] = 1.0
        ends[top] = i
        top += 1
        while top > 1 and vals[top - 2] < vals[top - 1]:
            w = wts[top - 2] + wts[top - 1]
            vals[top - 2] = (vals[top - 2] * wts[top - 2] + vals[top - 1] * wts[top - 1]) / w
            wts[top - 2] = w
            ends[top - 2] = ends[top - 1]
            top -= 1
    out = np.empty(n)
    start = 0
    for blk in range(top):
        for i in range(start, ends[blk] + 1):
            out[i] = vals[blk]
        start = ends[blk] + 1
    return out


@njit(cache=True)
def deterministic_chain(u, prices, kbs, kas, e_los, e_his, x, chi, eta, pdeg):
    """Apply known-price steps in order, each followed by boundary repair."""
    m = u.shape[0]
    for i in range(prices.shape[0]):
        u = marginal_known_price(u, kbs[i], kas[i], eta, pdeg, prices[i])
        rise = False
        for j in range(m):
            if x[j] < e_los[i]:
                u[j] = chi
            if x[j] >= e_his[i]:
                u[j] = 0.0
            if j > 0 and u[j] > u[j - 1]:
                rise = True
        if rise:
            u = isotonic_nonincreasing(u)
    return u
