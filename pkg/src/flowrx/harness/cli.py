"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

from .. import __version__
from ..engine import PATH_LABELS, MetricsStore, run
from ..errors import ConfigError, FlowRxError, InvariantViolation
from .config import ExperimentConfig, load_config
from .experiments import EXPERIMENTS, Table

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2

FLOW_HEADER = ("flow", "sent", "received", "delivered", "dropped_nic", "dropped_shortcircuit",
               "dropped_rate_limit", "dropped_revoked", "liveness")
PATH_HEADER = ("path", "isr", "polled")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="write CSV (and charts) into DIR instead of stdout")
    common.add_argument("--seed", type=int, help="override sim.seed")
    common.add_argument("--format", choices=["csv"], default="csv", help="output format")
    common.add_argument("--plot", action="store_true", help="also render a PNG chart (needs --out)")
    common.add_argument("--audit", action="store_true", help="check invariants after every event")

    p = argparse.ArgumentParser(prog="flowrx", description="Receive-path simulator and experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="run the simulation described by a config")
    s.add_argument("config")
    e = sub.add_parser("exp", parents=[common], help="run a built-in experiment")
    e.add_argument("experiment", choices=sorted(EXPERIMENTS))
    e.add_argument("config")
    v = sub.add_parser("validate", help="parse and check a config without running it")
    v.add_argument("config")
    return p


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "audit", False):
        cfg = ExperimentConfig(replace(cfg.sim, audit=True), cfg.exp, cfg.entries)
    return cfg


def _emit(name: str, text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        (Path(out) / f"{name}.csv").write_text(text, encoding="utf-8")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def simulation_tables(m: MetricsStore):
    flows = []
    for name in sorted(m.flows):
        f = m.flows[name]
        live = "NA" if not f.sent else f"{f.liveness:.4f}"
        flows.append((name, f.sent, f.received, f.delivered, f.dropped_nic, f.dropped_shortcircuit,
                      f.dropped_rate_limit, f.dropped_revoked, live))
    paths = [(p, m.path_counts.get(p, 0), m.poll_path_counts.get(p, 0)) for p in PATH_LABELS]
    return _csv(FLOW_HEADER, flows), _csv(PATH_HEADER, paths)


def _simulate(args) -> int:
    cfg = _load(args)
    if args.plot:
        raise ConfigError("no chart for plain simulations", "--plot")
    m = run(cfg.sim)
    flows, paths = simulation_tables(m)
    _emit("flows", flows, args.out)
    _emit("paths", paths, args.out)
    print(f"elapsed={m.elapsed}ns handled={m.handled} cpu_util={m.cpu_util:.4f} "
          f"polling_entries={m.polling_entries}", file=sys.stderr)
    return EXIT_OK


def _experiment(args) -> int:
    cfg = _load(args)
    if args.plot and args.out is None:
        raise ConfigError("--plot writes files and needs --out", "--plot")
    table: Table = EXPERIMENTS[args.experiment](cfg)
    for note in table.notes:
        print(f"flowrx: {table.name}: {note}", file=sys.stderr)
    _emit(table.name, table.to_csv(), args.out)
    if args.plot:
        from .plots import plot_table
        try:
            plot_table(table, args.out)
        except RuntimeError as e:
            print(f"flowrx: {e}", file=sys.stderr)
            return EXIT_CONFIG
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            _load(args)
            print(f"{args.config}: ok", file=sys.stderr)
            return EXIT_OK
        if getattr(args, "out", None) is not None:
            Path(args.out).mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return _simulate(args)
        return _experiment(args)
    except InvariantViolation as e:
        print(f"flowrx: invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except ConfigError as e:
        print(f"flowrx: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FlowRxError as e:
        print(f"flowrx: invalid input: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"flowrx: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
