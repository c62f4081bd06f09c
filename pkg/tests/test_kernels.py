import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.special import ndtri

from evabid import _kernels_np as knp
from evabid import kernels

from conftest import random_decreasing

knb = pytest.importorskip("evabid._kernels_nb")

ETA, PDEG = 0.93, 10.0


def _case(seed, m=120):
    rng = np.random.default_rng(seed)
    u = random_decreasing(rng, m, 200.0)
    if seed % 3 == 0:
        u[: m // 4] = 1e4
        u[-m // 5:] = 0.0
    return rng, u, float(rng.uniform(0, 6)), float(rng.uniform(0, 6))


@pytest.mark.parametrize("seed", range(12))
def test_marginal_kernels_agree(seed):
    rng, u, kb, ka = _case(seed)
    price = float(rng.uniform(-30, 150))
    np.testing.assert_allclose(knb.marginal_known_price(u, kb, ka, ETA, PDEG, price),
                               knp.marginal_known_price(u, kb, ka, ETA, PDEG, price), rtol=0, atol=1e-10)
    mu, sigma = float(rng.uniform(0, 80)), float(rng.uniform(0.1, 40))
    np.testing.assert_allclose(knb.marginal_gaussian(u, kb, ka, ETA, PDEG, mu, sigma),
                               knp.marginal_gaussian(u, kb, ka, ETA, PDEG, mu, sigma), rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("seed", range(12))
def test_cvar_kernels_agree(seed):
    rng, u, kb, ka = _case(seed, 60)
    dx = float(rng.uniform(0.2, 3.0))
    alpha = float(rng.uniform(0.5, 0.99))
    mu, sigma = float(rng.uniform(0, 80)), float(rng.uniform(1, 40))
    z = (float(ndtri(0.5 * alpha)), float(ndtri(1 - 0.5 * alpha)))
    a = knb.edge_cvar_gaussian(u, dx, kb, ka, ETA, PDEG, mu, sigma, alpha, *z)
    b = knp.edge_cvar_gaussian(u, dx, kb, ka, ETA, PDEG, mu, sigma, alpha, *z)
    scale = np.abs(b).max() + 1.0
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-8 * scale)
    n = int(rng.integers(1, 7))
    atoms = np.sort(rng.uniform(-20, 150, n))
    probs = rng.dirichlet(np.ones(n))
    a = knb.edge_cvar_discrete(u, dx, kb, ka, ETA, PDEG, atoms, probs, alpha)
    b = knp.edge_cvar_discrete(u, dx, kb, ka, ETA, PDEG, atoms, probs, alpha)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9 * (np.abs(b).max() + 1.0))


def _pava_reference(v):
    # pool-adjacent-violators written out directly
    blocks = []
    for x in v:
        blocks.append([x, 1])
        while len(blocks) > 1 and blocks[-2][0] < blocks[-1][0]:
            s, n = blocks.pop()
            blocks[-1][0] = (blocks[-1][0] * blocks[-1][1] + s * n) / (blocks[-1][1] + n)
            blocks[-1][1] += n
    return np.concatenate([[m] * n for m, n in blocks])


@pytest.mark.parametrize("seed", range(8))
def test_isotonic_backends(seed):
    v = np.random.default_rng(seed).normal(size=200).cumsum()
    ref = _pava_reference(v)
    np.testing.assert_allclose(knp.isotonic_nonincreasing(v), ref, atol=1e-10)
    np.testing.assert_allclose(knb.isotonic_nonincreasing(v), ref, atol=1e-10)


def test_deterministic_chain_agrees():
    rng, u, _, _ = _case(1, 100)
    n = 30
    x = np.linspace(0, 99, 100)
    args = (rng.uniform(0, 90, n), rng.uniform(0, 5, n), rng.uniform(0, 5, n),
            np.sort(rng.uniform(-10, 30, n))[::-1].copy(), np.sort(rng.uniform(60, 110, n))[::-1].copy(),
            x, 1e4, ETA, PDEG)
    np.testing.assert_allclose(knb.deterministic_chain(u, *args), knp.deterministic_chain(u, *args),
                               rtol=0, atol=1e-8)


def test_env_flag_selects_numpy():
    code = "from evabid import kernels, _accel; print(_accel.BACKEND, kernels.numba_backend is None)"
    env = dict(os.environ, EVABID_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]


def test_active_backend_is_exported():
    for name in ("marginal_known_price", "marginal_gaussian", "edge_cvar_gaussian", "edge_cvar_discrete",
                 "isotonic_nonincreasing", "deterministic_chain"):
        assert callable(getattr(kernels, name))
