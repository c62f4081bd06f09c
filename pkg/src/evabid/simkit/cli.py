"""Command-line entry point: ``evabid <command> ...``."""

import argparse
import csv
import logging
import os
import sys

import numpy as np

from evabid.dispatch import TraceWriter
from evabid.fleet import write_sessions
from evabid.market import read_settlements
from evabid.price_model import by_day, fit, read_prices, save_model, write_prices
from evabid.simkit import report as rpt
from evabid.simkit.config import ConfigError, SimConfig, load_config
from evabid.simkit.simulation import (
    attach_ratio, first_table, horizon_sweep, load_data, risk_sweep, run_simulation,
)
from evabid.simkit.synthetic import generate_fleet, generate_prices
from evabid.valuation import save_table

log = logging.getLogger("evabid")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _config(args, **extra):
    over = {k: getattr(args, k, None) for k in ("seed", "days", "strategy")}
    over.update(extra)
    if args.config:
        return load_config(args.config, **over)
    return SimConfig(**{k: v for k, v in over.items() if v is not None})


def cmd_fit_prices(args):
    ps = read_prices(args.prices, args.slot_minutes)
    spd = 1440 // args.slot_minutes
    model = fit(by_day(ps.rt, spd))
    save_model(args.out, model)
    print(f"fitted {model.period} slots from {ps.n_slots // spd} days -> {args.out}")


def cmd_gen_fleet(args):
    sessions = generate_fleet(args.n, args.days, args.seed, args.slot_minutes, eta=args.eta)
    write_sessions(args.out, sessions)
    print(f"{len(sessions)} sessions -> {args.out}")


def cmd_gen_prices(args):
    write_prices(args.out, generate_prices(args.days, args.seed, args.slot_minutes))
    print(f"{args.days} days of prices -> {args.out}")


def cmd_train(args):
    cfg = _config(args)
    if cfg.strategy not in ("S1", "S2", "S3"):
        cfg = cfg.with_(strategy="S2")
    table, _ = first_table(cfg)
    save_table(args.out, table)
    print(f"table {table.values.shape[0]}x{table.values.shape[1]} -> {args.out}")


def _trace_target(cfg, data):
    if cfg.trace_ev:
        return cfg.trace_ev
    sim = data.sim_sessions(cfg.days)
    return sim[0].ev_id if sim else None


def cmd_simulate(args):
    cfg = _config(args)
    data = load_data(cfg)
    os.makedirs(args.out, exist_ok=True)
    ev = _trace_target(cfg, data)
    trace_path = os.path.join(args.out, "trace.csv")
    trace = TraceWriter(trace_path, [ev] if ev else [])
    reports = []
    try:
        for s in ("B1", "B2"):
            if s != cfg.strategy:
                reports.append(run_simulation(cfg.with_(strategy=s), data))
        main = run_simulation(cfg, data, keep_bids=args.bids, trace=trace)
    finally:
        trace.close()
    reports.insert(0, main)
    b1 = next(r for r in reports if r.strategy == "B1").total_cost
    b2 = next(r for r in reports if r.strategy == "B2").total_cost
    for r in reports:
        try:
            attach_ratio(r, b1, b2)
        except ValueError:
            pass
    rpt.emit_report(reports, args.out, soc_rows=rpt.read_trace(trace_path, ev), charts=not args.no_charts)
    lat = main.latency_stats()
    print(f"{main.strategy}: total ${main.total_cost:.2f} (energy {main.energy_cost:.2f}, "
          f"degradation {main.degradation_cost:.2f}), ratio {main.profit_ratio}, "
          f"latency max {lat['max'] * 1e3:.2f} ms")


def cmd_sweep_h(args):
    cfg = _config(args)
    rows = horizon_sweep(cfg, _ints(args.values))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["H", "profit_ratio", "total_cost_usd"])
    for H, ratio, cost in rows:
        w.writerow([H, f"{ratio:.6f}", f"{cost:.6f}"])


def cmd_sweep_risk(args):
    cfg = _config(args)
    rows = risk_sweep(cfg, _floats(args.lambdas), _floats(args.alphas))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        rpt.write_risk_matrix(os.path.join(args.out, "risk_matrix.csv"), rows)
        rpt.plot_risk(os.path.join(args.out, "risk_matrix.svg"), rows)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(rpt.RISK_HEADER)
    for r in rows:
        w.writerow([r.lam, r.alpha, f"{r.energy_cost:.6f}", f"{r.degradation_cost:.6f}",
                    f"{r.total_cost:.6f}", f"{r.seconds:.3f}"])


def cmd_report(args):
    """Redraw charts from the CSVs of an earlier ``simulate`` run."""
    d = args.inp
    summary = os.path.join(d, "summary.csv")
    if not os.path.exists(summary):
        raise FileNotFoundError(summary)
    spd = 1440 // args.slot_minutes
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.5))
    for name in sorted(os.listdir(d)):
        if name.startswith("settlement_") and name.endswith(".csv"):
            recs = read_settlements(os.path.join(d, name))
            if not recs:
                continue
            t = np.array([r.t for r in recs])
            tot = np.array([r.energy_cost + r.degradation_cost for r in recs])
            day = (t - t.min()) // spd
            ax.plot(np.arange(day.max() + 1) + 1, np.bincount(day, tot), marker="o", ms=3,
                    label=name[len("settlement_"):-4].upper())
    ax.set_xlabel("day")
    ax.set_ylabel("total cost ($)")
    ax.legend(fontsize=8)
    rpt._save(fig, os.path.join(d, "daily_cost.svg"))
    trace = os.path.join(d, "soc_trace.csv")
    if os.path.exists(trace):
        rpt.plot_soc(os.path.join(d, "soc_trace.svg"), rpt.read_trace(trace))
    with open(summary, encoding="utf-8") as fh:
        sys.stdout.write(fh.read())


def build_parser():
    ap = argparse.ArgumentParser(prog="evabid")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("fit-prices", help="fit the per-slot Gaussian price model")
    p.add_argument("prices")
    p.add_argument("--out", required=True)
    p.add_argument("--slot-minutes", type=int, default=5)
    p.set_defaults(fn=cmd_fit_prices)

    p = sub.add_parser("gen-fleet", help="synthetic charging sessions")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slot-minutes", type=int, default=5)
    p.add_argument("--eta", type=float, default=0.93)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_fleet)

    p = sub.add_parser("gen-prices", help="synthetic real-time and day-ahead prices")
    p.add_argument("--days", type=int, default=97)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slot-minutes", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_prices)

    def sim_args(p):
        p.add_argument("--config", default="")
        p.add_argument("--seed", type=int)
        p.add_argument("--days", type=int)

    p = sub.add_parser("train", help="train the first-day value table")
    sim_args(p)
    p.add_argument("--strategy")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("simulate", help="run one strategy with B1/B2 for the ratio")
    sim_args(p)
    p.add_argument("--strategy")
    p.add_argument("--out", required=True)
    p.add_argument("--bids", type=int, default=1, help="bid snapshots to keep")
    p.add_argument("--no-charts", action="store_true")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep-h", help="profit ratio against the perfect-forecast window")
    sim_args(p)
    p.add_argument("--values", default="0,6,12,24,48")
    p.set_defaults(fn=cmd_sweep_h)

    p = sub.add_parser("sweep-risk", help="S3 over a lambda x alpha grid")
    sim_args(p)
    p.add_argument("--lambda", dest="lambdas", default="0,0.1,0.2")
    p.add_argument("--alpha", dest="alphas", default="0.95,0.99")
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_sweep_risk)

    p = sub.add_parser("report", help="redraw charts of a simulate output directory")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--slot-minutes", type=int, default=5)
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"evabid {args.cmd}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
