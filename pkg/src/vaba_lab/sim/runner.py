"""Experiment configuration, batch execution and result files."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from vaba_lab.sim.adversary import AdversaryKind
from vaba_lab.sim.metrics import RunMetrics, aggregate
from vaba_lab.sim.network import HALT_POLICIES, Simulation
from vaba_lab.validators import NAMES as VALIDATORS

CSV_COLUMNS = [
    "run_seed",
    "views_to_decide",
    "words_view1",
    "max_words_per_view",
    "decided_value_honest",
    "duration",
]


@dataclass
class ExperimentConfig:
    n: int = 4
    f: int = 1
    adversary: str = "fair"
    validator: str = "always"
    seed: int = 0
    runs: int = 1
    halt_policy: str = "all-decided"
    max_events: int = 1_000_000
    max_age: int = 100_000
    workers: int = 1
    trace: Optional[str] = None
    out: Optional[str] = None
    summary: Optional[str] = None

    def __post_init__(self):
        if self.f < 0 or self.n < 3 * self.f + 1:
            raise ValueError(f"need n >= 3f+1, got n={self.n}, f={self.f}")
        self.adversary = AdversaryKind.parse(self.adversary).value
        if self.validator not in VALIDATORS:
            raise ValueError(f"unknown validator {self.validator!r}; choose from {VALIDATORS}")
        if self.halt_policy not in HALT_POLICIES:
            raise ValueError(f"unsupported halt policy {self.halt_policy!r}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**known)

    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.runs)]


@dataclass
class RunResult:
    metrics: RunMetrics
    trace: list = field(default_factory=list)


def run_one(config: ExperimentConfig, seed: int, trace: bool = False) -> RunResult:
    sim = Simulation(
        config.n, config.f, config.adversary, config.validator, seed,
        max_events=config.max_events, max_age=config.max_age, trace=trace,
        halt_policy=config.halt_policy,
    )
    metrics = sim.run()
    return RunResult(metrics, sim.trace)


def _run_job(args):
    config, seed, trace = args
    return run_one(config, seed, trace)


def run_many(config: ExperimentConfig, trace: bool = False) -> list[RunResult]:
    jobs = [(config, s, trace) for s in config.seeds()]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


# -- output formats ---------------------------------------------------------------


def csv_row(m: RunMetrics) -> dict:
    return {
        "run_seed": m.seed,
        "views_to_decide": m.max_views if m.max_views is not None else "",
        "words_view1": m.words_view1,
        "max_words_per_view": m.max_words_per_view,
        "decided_value_honest": str(m.quality_flag).lower(),
        "duration": f"{m.duration:.6f}",
    }


def to_csv(metrics: list) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for m in metrics:
        w.writerow(csv_row(m))
    return buf.getvalue()


def trace_lines(results: list) -> str:
    """JSON-lines trace; runs are separated by their ``run`` field."""
    lines = []
    for r in results:
        for ev in r.trace:
            rec = {"run": r.metrics.seed, **ev}
            lines.append(json.dumps(rec, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


def summary_json(config: ExperimentConfig, metrics: list) -> str:
    doc = {"config": asdict(config), **aggregate(metrics)}
    return json.dumps(doc, indent=2, sort_keys=True)


def execute(config: ExperimentConfig) -> tuple[list[RunResult], dict]:
    """Run a config and write whatever output files it names."""
    results = run_many(config, trace=config.trace is not None)
    metrics = [r.metrics for r in results]
    if config.out:
        Path(config.out).write_text(to_csv(metrics))
    if config.trace:
        Path(config.trace).write_text(trace_lines(results))
    if config.summary:
        Path(config.summary).write_text(summary_json(config, metrics))
    return results, aggregate(metrics)
