#!/usr/bin/env python3
"""Numba vs numpy timings for the valuation kernels.

Each kernel is run on both backends with identical inputs; the script also
checks that the two agree. A second part trains a full value table in a
subprocess with and without EVABID_DISABLE_NUMBA.

    python3 bench/bench_kernels.py [--M 1000] [--runs 5] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np
from scipy.special import ndtri

from evabid import _kernels_nb as nb
from evabid import _kernels_np as npk

TRAIN_SNIPPET = """
import time
import numpy as np
from evabid import BACKEND
from evabid.fleet import ChargingSession, aggregate
from evabid.price_model import PriceModel
from evabid.valuation import RiskSpec, TrainingConfig, train
rng = np.random.default_rng(1)
ss = []
for i in range(200):
    a = int(rng.integers(0, 200))
    ss.append(ChargingSession(f"e{i}", a, a + int(rng.integers(60, 140)), float(rng.uniform(5, 40)),
                              100.0, 20.0, 50.0, -50.0, 20.0))
env = aggregate(ss, 288, 0.93, 1 / 12)
t = np.arange(288)
model = PriceModel(30 + 10 * np.sin(2 * np.pi * t / 288), np.full(288, 8.0))
risk = RiskSpec(LAM, 0.95) if LAM > 0 else None
cfg = TrainingConfig(H=0, chi=1e4, M=GRID, eta=0.93, pi_deg=10.0, dt=1 / 12, risk=risk, strict=False)
train(env, cfg, model)
tic = time.perf_counter()
train(env, cfg, model)
print(BACKEND, time.perf_counter() - tic)
"""


def timeit(fn, args, runs):
    fn(*args)  # compile / warm caches
    best = np.inf
    for _ in range(runs):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def kernel_cases(M, seed=0):
    rng = np.random.default_rng(seed)
    u = np.sort(rng.uniform(0.0, 120.0, M))[::-1].copy()
    dx = 200.0 / M
    kb, ka = 6.3, 5.1
    z = (ndtri(0.025), ndtri(0.975))
    atoms = np.array([10.0, 25.0, 40.0, 60.0, 95.0])
    probs = np.array([0.1, 0.3, 0.3, 0.2, 0.1])
    p = np.array([float(rng.uniform(10, 80)) for _ in range(48)])
    kbs = np.full(48, kb)
    kas = np.full(48, ka)
    x = np.linspace(0.0, 200.0, M)
    return {
        "marginal_known_price": (u, kb, ka, 0.93, 10.0, 35.0),
        "marginal_gaussian": (u, kb, ka, 0.93, 10.0, 40.0, 15.0),
        "edge_cvar_gaussian": (u, dx, kb, ka, 0.93, 10.0, 40.0, 15.0, 0.95, *z),
        "edge_cvar_discrete": (u, dx, kb, ka, 0.93, 10.0, atoms, probs, 0.9),
        "isotonic_nonincreasing": (u + rng.normal(0, 5, M),),
        "deterministic_chain": (u, p, kbs, kas, np.full(48, 10.0), np.full(48, 190.0), x, 1e4, 0.93, 10.0),
    }


def train_timing(M, lam):
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, EVABID_DISABLE_NUMBA=flag)
        code = TRAIN_SNIPPET.replace("LAM", repr(lam)).replace("GRID", str(M))
        res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
        name, sec = res.stdout.split()
        out[name] = float(sec)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--M", type=int, default=1000)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--json", default="")
    ap.add_argument("--skip-train", action="store_true")
    args = ap.parse_args(argv)

    rows = []
    print(f"{'kernel':<24}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}{'max diff':>12}")
    for name, a in kernel_cases(args.M).items():
        t_np = timeit(getattr(npk, name), a, args.runs)
        t_nb = timeit(getattr(nb, name), a, args.runs)
        diff = float(np.max(np.abs(getattr(npk, name)(*a) - getattr(nb, name)(*a))))
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "max_abs_diff": diff})
        print(f"{name:<24}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>10.1f}{diff:>12.2e}")

    result = {"M": args.M, "kernels": rows}
    if not args.skip_train:
        for lam in (0.0, 0.2):
            tt = train_timing(args.M, lam)
            result[f"train_T288_lam{lam}"] = tt
            print(f"train T=288 lam={lam}: numpy {tt['numpy']:.2f} s, numba {tt['numba']:.2f} s")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2)


if __name__ == "__main__":
    main()
