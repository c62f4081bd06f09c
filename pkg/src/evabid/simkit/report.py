"""Report files: CSV tables and SVG charts for a finished run."""

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from evabid.bidding import write_bids  # noqa: E402
from evabid.market import write_settlements  # noqa: E402

SUMMARY_HEADER = [
    "strategy", "days", "energy_cost_usd", "degradation_cost_usd", "total_cost_usd",
    "profit_ratio", "ratio_clamped", "latency_mean_s", "latency_max_s", "train_mean_s",
]
DAILY_HEADER = ["day", "energy_cost_usd", "degradation_cost_usd", "total_cost_usd"]
RISK_HEADER = ["lambda", "alpha", "energy_cost_usd", "degradation_cost_usd", "total_cost_usd", "seconds"]
SOC_HEADER = ["interval", "ev_id", "power_kw", "energy_kwh"]


def _csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def summary_row(rep):
    lat = rep.latency_stats()
    train = sum(rep.train_seconds) / len(rep.train_seconds) if rep.train_seconds else 0.0
    ratio = "" if rep.profit_ratio is None else f"{rep.profit_ratio:.6f}"
    return [
        rep.strategy, len(rep.records) // rep.slots_per_day if rep.slots_per_day else 0,
        f"{rep.energy_cost:.6f}", f"{rep.degradation_cost:.6f}", f"{rep.total_cost:.6f}",
        ratio, int(rep.profit_ratio_clamped), f"{lat['mean']:.6g}", f"{lat['max']:.6g}", f"{train:.6g}",
    ]


def write_summary(path, reports):
    _csv(path, SUMMARY_HEADER, [summary_row(r) for r in reports])


def write_risk_matrix(path, rows):
    """One row per (lambda, alpha) cell."""
    _csv(path, RISK_HEADER, [
        [r.lam, r.alpha, f"{r.energy_cost:.6f}", f"{r.degradation_cost:.6f}", f"{r.total_cost:.6f}",
         f"{r.seconds:.3f}"]
        for r in rows
    ])


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_daily(path, reports):
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for rep in reports:
        d = rep.per_day()
        if len(d):
            ax.plot(range(1, len(d) + 1), d[:, 2], marker="o", ms=3, label=rep.strategy)
    ax.set_xlabel("day")
    ax.set_ylabel("total cost ($)")
    if reports:
        ax.legend(fontsize=8)
    _save(fig, path)


def plot_bid(path, curve):
    """Step chart of one bid curve, charge side positive."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for steps, label in ((curve.charge, "charge"), (curve.discharge, "discharge")):
        if not steps:
            continue
        q = [0.0] + [s[0] for s in steps]
        p = [steps[0][1]] + [s[1] for s in steps]
        ax.step(q, p, where="pre", label=label)
    ax.axvline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("quantity (kW)")
    ax.set_ylabel("price ($/MWh)")
    ax.set_title(f"interval {curve.t}")
    if curve.charge or curve.discharge:
        ax.legend(fontsize=8)
    _save(fig, path)


def plot_soc(path, rows):
    fig, ax = plt.subplots(figsize=(7, 3.5))
    if rows:
        ax.step([r[0] for r in rows], [r[3] for r in rows], where="post")
    ax.set_xlabel("interval")
    ax.set_ylabel("energy (kWh)")
    _save(fig, path)


def plot_risk(path, rows):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for a in sorted({r.alpha for r in rows}):
        sel = sorted((r for r in rows if r.alpha == a), key=lambda r: r.lam)
        ax.plot([r.lam for r in sel], [r.total_cost for r in sel], marker="o", label=f"alpha={a}")
    ax.set_xlabel("lambda")
    ax.set_ylabel("total cost ($)")
    if rows:
        ax.legend(fontsize=8)
    _save(fig, path)


def read_trace(path, ev_id=None):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            if ev_id is None or r["ev_id"] == ev_id:
                out.append((int(r["interval"]), r["ev_id"], float(r["power_kw"]), float(r["energy_kwh"])))
    return out


def emit_report(reports, out_dir, soc_rows=(), risk_rows=(), charts=True):
    """Write every report file into ``out_dir``; returns the written paths."""
    if not isinstance(reports, (list, tuple)):
        reports = [reports]
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    def p(name):
        path = os.path.join(out_dir, name)
        paths.append(path)
        return path

    write_summary(p("summary.csv"), reports)
    for rep in reports:
        tag = rep.strategy.lower()
        write_settlements(p(f"settlement_{tag}.csv"), rep.records)
        d = rep.per_day()
        _csv(p(f"daily_{tag}.csv"), DAILY_HEADER,
             [[i + 1] + [f"{x:.6f}" for x in row] for i, row in enumerate(d)])
        write_bids(p(f"bids_{tag}.csv"), rep.bids)
        if charts:
            for c in rep.bids[:1]:
                plot_bid(p(f"bid_{tag}_t{c.t}.svg"), c)
    soc_rows = list(soc_rows)
    _csv(p("soc_trace.csv"), SOC_HEADER,
         [[r[0], r[1], f"{r[2]:.6f}", f"{r[3]:.6f}"] for r in soc_rows])
    risk_rows = list(risk_rows)
    if risk_rows:
        write_risk_matrix(p("risk_matrix.csv"), risk_rows)
    if charts:
        plot_daily(p("daily_cost.svg"), reports)
        plot_soc(p("soc_trace.svg"), soc_rows)
        if risk_rows:
            plot_risk(p("risk_matrix.svg"), risk_rows)
    return paths
