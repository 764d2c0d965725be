"""Command-line entry point: ``hybridchain run|sweep|train|report``.

Exit codes: 0 success, 1 configuration or user error, 2 internal invariant
violation. Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import RunConfig, config_from_dict, dump_config, load_config
from .consensus import Simulation, bootstrap_classifier
from .ledger import dump_transactions
from .metrics import (
    CSV_HEADER,
    LogFormatError,
    SweepSpec,
    aggregate_point,
    compute_metrics,
    read_event_log,
    rows_to_csv,
    run_sweep,
    write_event_log,
)
from .validation import ConfigError, ProtocolViolation

log = logging.getLogger("hybridchain")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


def _out_dir(args, config: RunConfig):
    out = Path(args.out if args.out else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_history(path, history, label):
    arr = np.asarray(history)
    header = ["epoch"] + [f"{label}{k}" for k in range(arr.shape[1])]
    lines = [",".join(header)]
    for e, row in enumerate(arr):
        lines.append(",".join([str(e)] + [repr(float(x)) for x in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_run_outputs(sim: Simulation, out: Path):
    """Dump everything a run produces; returns the computed metrics."""
    write_event_log(sim.events, out / "events.jsonl")
    metrics = compute_metrics(sim.events)
    row = aggregate_point("run", sim.config.seed, [metrics.summary()])
    rows_to_csv([row], out / "metrics.csv")
    (out / "metrics.json").write_text(
        json.dumps(metrics.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_history(out / "validator_reliability.csv", sim.validator_history, "v")
    _write_history(out / "user_reliability.csv", sim.user_history, "u")
    dump_transactions(
        (sim.ledger[t] for t in sorted(sim.ledger.transactions) if not sim.ledger[t].genesis),
        out / "transactions.jsonl",
    )
    dump_config(sim.config, out / "config.yaml")
    return metrics


def cmd_run(args):
    config = load_config(args.config, preset=args.preset, seed=args.seed)
    out = _out_dir(args, config)
    sim = Simulation(config)
    sim.run()
    metrics = write_run_outputs(sim, out)
    print(
        f"decided={metrics.decided} accuracy={metrics.accuracy:.4f} "
        f"throughput={metrics.throughput:.1f}/min max_latency={metrics.max_latency:.0f}ms "
        f"backlog={metrics.backlog} -> {out}"
    )
    return EXIT_OK


def load_sweep_spec(path, preset=None, seed=None):
    """A sweep file holds ``axis``, ``points``, ``repeats``, optional ``jobs``
    and ``couple_f``, and a ``base`` run config."""
    if path is None:
        raise ConfigError("sweep needs --config pointing at a sweep file")
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read sweep file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("sweep file root must be a mapping")
    unknown = sorted(set(data) - {"axis", "points", "repeats", "jobs", "couple_f", "base"})
    if unknown:
        raise ConfigError(f"unknown key(s) in sweep file: {', '.join(unknown)}")
    base_data = dict(data.get("base") or {})
    if seed is not None:
        base_data["seed"] = seed
    base = config_from_dict(base_data, preset=preset)
    if not isinstance(data.get("points"), list):
        raise ConfigError("sweep 'points' must be a list")
    return SweepSpec(
        axis=data.get("axis"), points=data["points"], repeats=int(data.get("repeats", 1)),
        base=base, couple_f=bool(data.get("couple_f", True)), jobs=int(data.get("jobs", 1)),
    )


def cmd_sweep(args):
    spec = load_sweep_spec(args.config, preset=args.preset, seed=args.seed)
    out = _out_dir(args, spec.base)
    rows = run_sweep(spec)
    path = out / f"sweep_{spec.axis}.csv"
    sys.stdout.write(rows_to_csv(rows, path))
    return EXIT_OK


def cmd_train(args):
    config = load_config(args.config, preset=args.preset, seed=args.seed)
    out = _out_dir(args, config)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(7)[4])
    weights, acc = bootstrap_classifier(config, rng)
    rec = {**weights.to_record(), "heldout_accuracy": acc}
    path = out / "weights.json"
    path.write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    shown = "n/a" if acc is None else f"{acc:.4f}"
    print(f"heldout_accuracy={shown} weights={path}")
    return EXIT_OK


def cmd_report(args):
    path = Path(args.log) if args.log else Path(args.out or ".") / "events.jsonl"
    try:
        events = read_event_log(path)
    except OSError as exc:
        raise ConfigError(f"cannot read event log {path}: {exc}") from exc
    metrics = compute_metrics(events)
    row = aggregate_point("run", events[0].get("seed", 0), [metrics.summary()])
    sys.stdout.write(rows_to_csv([row]))
    print(json.dumps(metrics.summary(), sort_keys=True))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="hybridchain", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--preset", choices=("desk", "paper"))

    common(sub.add_parser("run", help="simulate one seeded run"))
    common(sub.add_parser("sweep", help="run a parameter sweep from a sweep file"))
    common(sub.add_parser("train", help="fit and export the bootstrap classifier"))
    report = sub.add_parser("report", help="re-derive metrics from an event log")
    common(report)
    report.add_argument("log", nargs="?", help="events.jsonl (default: OUT/events.jsonl)")
    return parser


_COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "train": cmd_train, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, LogFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
