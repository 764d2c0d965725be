"""Throughput, accuracy and latency from event logs, plus parameter sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .validation import ConfigError, ProtocolViolation

SWEEP_AXES = ("tau", "gamma", "M")
CSV_HEADER = (
    "axis", "value", "seed_count", "throughput_mean", "throughput_std", "accuracy_mean",
    "accuracy_std", "p50_ms", "p90_ms", "p99_ms", "max_ms", "backlog",
)


_DECISION_FIELDS = frozenset(
    {"tx", "final", "truth", "latency_ms", "decided_ms", "queue_wait_ms", "witness_size"}
)


class LogFormatError(ValueError):
    pass


@dataclass
class RunMetrics:
    throughput: float
    accuracy: float
    latency_samples: list[float]
    max_latency: float
    latency_cdf: dict[str, float]
    decided: int
    backlog: int
    window_ms: float
    bound_violations: int = 0

    def summary(self):
        out = asdict(self)
        out.pop("latency_samples")
        return out


def latency_cdf(samples):
    """Nearest-rank p50/p90/p99 and max."""
    data = sorted(float(x) for x in samples)
    if not data:
        raise ValueError("latency_cdf needs at least one sample")
    n = len(data)

    def rank(q):
        return data[max(1, math.ceil(q * n)) - 1]

    return {"p50": rank(0.50), "p90": rank(0.90), "p99": rank(0.99), "max": data[-1]}


def write_event_log(events, path):
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
    return path


def read_event_log(path):
    events = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"{path}:{lineno}: not valid JSON ({exc.msg})") from None
            if not isinstance(event, dict) or "type" not in event:
                raise LogFormatError(f"{path}:{lineno}: record has no 'type'")
            events.append(event)
    return events


def latency_bound_violations(decisions, round_time_ms, settlement_ms):
    """Decisions whose latency exceeds queue wait + |W| rounds + one settlement tick."""
    bad = []
    for d in decisions:
        bound = d["queue_wait_ms"] + d["witness_size"] * round_time_ms + settlement_ms
        if d["latency_ms"] > bound + 1e-9 or d["latency_ms"] < round_time_ms - 1e-9:
            bad.append(d["tx"])
    return bad


def compute_metrics(events):
    """Metrics over the measurement window recorded in the log.

    Decisions after the window, and submissions never decided, count as
    backlog; accuracy covers decided transactions only.
    """
    run = end = None
    decisions = []
    submitted = 0
    for i, e in enumerate(events, 1):
        kind = e.get("type")
        if kind == "run":
            run = e
        elif kind == "end":
            end = e
        elif kind == "decision":
            missing = _DECISION_FIELDS - set(e)
            if missing:
                raise LogFormatError(f"record {i}: decision lacks {sorted(missing)}")
            decisions.append(e)
        elif kind == "submit":
            submitted += 1
    if run is None or end is None:
        raise LogFormatError("event log needs a 'run' header and an 'end' trailer")
    window = float(end["window_ms"])
    in_window = [d for d in decisions if d["decided_ms"] <= window]
    late = len(decisions) - len(in_window)
    undecided = int(end.get("backlog", max(submitted - len(decisions), 0)))
    backlog = undecided + late
    if in_window:
        correct = sum(d["final"] == d["truth"] for d in in_window)
        accuracy = correct / len(in_window)
        samples = [float(d["latency_ms"]) for d in in_window]
        cdf = latency_cdf(samples)
    else:
        accuracy, samples, cdf = float("nan"), [], {"p50": 0.0, "p90": 0.0, "p99": 0.0, "max": 0.0}
    minutes = window / 60_000.0
    throughput = len(in_window) / minutes if minutes > 0 else 0.0
    violations = latency_bound_violations(in_window, run["round_time_ms"], run["settlement_ms"])
    return RunMetrics(
        throughput=throughput, accuracy=accuracy, latency_samples=samples,
        max_latency=cdf["max"], latency_cdf=cdf, decided=len(in_window), backlog=backlog,
        window_ms=window, bound_violations=len(violations),
    )


@dataclass
class SweepSpec:
    axis: str
    points: list
    repeats: int = 1
    base: object = None
    couple_f: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.points:
            raise ConfigError("sweep needs at least one point")
        if int(self.repeats) < 1:
            raise ConfigError("sweep repeats must be >= 1")


class SweepAborted(ProtocolViolation):
    def __init__(self, value, seed, cause):
        super().__init__(f"run at {value} with seed {seed} violated an invariant: {cause}")
        self.value, self.seed, self.cause = value, seed, cause


def point_config(spec: SweepSpec, value, seed):
    base = spec.base
    proto = {}
    adv = {}
    work = {}
    if spec.axis == "tau":
        adv["tau"] = float(value)
        if spec.couple_f:
            proto["f"] = int(round(float(value) * base.protocol.M))
    elif spec.axis == "gamma":
        work["gamma"] = float(value)
    else:
        proto["M"] = int(value)
        if spec.couple_f:
            proto["f"] = int(round(base.adversary.tau * int(value)))
    return base.replace(seed=int(seed), protocol=proto, adversary=adv, workload=work)


def _run_one(config):
    from .consensus import run_simulation

    sim = run_simulation(config)
    return compute_metrics(sim.events).summary()


def run_sweep(spec: SweepSpec, runner=None):
    """Run ``repeats`` seeds per point and aggregate mean and (population) std.

    Returns a list of row dicts keyed by :data:`CSV_HEADER`.
    """
    runner = runner or _run_one
    jobs = []
    for value in spec.points:
        for i in range(int(spec.repeats)):
            seed = spec.base.seed + i
            jobs.append((value, seed, point_config(spec, value, seed)))

    def guarded(job):
        value, seed, cfg = job
        try:
            return runner(cfg)
        except ProtocolViolation as exc:
            raise SweepAborted(value, seed, exc) from exc

    if spec.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            futures = [pool.submit(runner, cfg) for _, _, cfg in jobs]
            results = []
            for (value, seed, _), fut in zip(jobs, futures):
                try:
                    results.append(fut.result())
                except ProtocolViolation as exc:
                    raise SweepAborted(value, seed, exc) from exc
    else:
        results = [guarded(job) for job in jobs]

    rows = []
    for value in spec.points:
        runs = [res for (v, _, _), res in zip(jobs, results) if v == value]
        rows.append(aggregate_point(spec.axis, value, runs))
    return rows


def aggregate_point(axis, value, runs):
    thr = np.array([r["throughput"] for r in runs], dtype=float)
    acc = np.array([r["accuracy"] for r in runs], dtype=float)

    def mean_of(key):
        return float(np.mean([r["latency_cdf"][key] for r in runs]))

    return {
        "axis": axis,
        "value": value,
        "seed_count": len(runs),
        "throughput_mean": float(thr.mean()),
        "throughput_std": float(thr.std()),
        "accuracy_mean": float(acc.mean()),
        "accuracy_std": float(acc.std()),
        "p50_ms": mean_of("p50"),
        "p90_ms": mean_of("p90"),
        "p99_ms": mean_of("p99"),
        "max_ms": mean_of("max"),
        "backlog": float(np.mean([r["backlog"] for r in runs])),
    }


def rows_to_csv(rows, path=None):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in CSV_HEADER})
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value
