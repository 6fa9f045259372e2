"""Command line entry point: ``vaba-lab run`` and ``vaba-lab sweep``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from vaba_lab.sim.adversary import AdversaryKind
from vaba_lab.sim.network import HALT_POLICIES
from vaba_lab.sim.runner import ExperimentConfig, execute
from vaba_lab.validators import NAMES as VALIDATORS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vaba-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment configuration")
    run.add_argument("--n", type=int, default=4)
    run.add_argument("--f", type=int, default=1)
    run.add_argument("--adversary", choices=[k.value for k in AdversaryKind], default="fair")
    run.add_argument("--validator", choices=VALIDATORS, default="always")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--runs", type=int, default=1)
    run.add_argument("--halt-policy", choices=HALT_POLICIES, default="all-decided")
    run.add_argument("--max-events", type=int, default=1_000_000)
    run.add_argument("--max-age", type=int, default=100_000)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--trace", metavar="PATH", help="JSON-lines delivery trace")
    run.add_argument("--out", metavar="PATH", help="per-run CSV")
    run.add_argument("--summary", metavar="PATH", help="aggregate JSON")

    sweep = sub.add_parser("sweep", help="run a JSON array of experiment configurations")
    sweep.add_argument("--config", required=True, metavar="FILE")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        n=args.n, f=args.f, adversary=args.adversary, validator=args.validator,
        seed=args.seed, runs=args.runs, halt_policy=args.halt_policy,
        max_events=args.max_events, max_age=args.max_age, workers=args.workers,
        trace=args.trace, out=args.out, summary=args.summary,
    )


def _load_sweep(path: str) -> list[ExperimentConfig]:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise ValueError("sweep config must be a JSON array of experiment objects")
    return [ExperimentConfig.from_dict(item) for item in doc]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            configs = [_config_from_args(args)]
        else:
            configs = _load_sweep(args.config)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))

    status = 0
    for config in configs:
        _results, summary = execute(config)
        print(json.dumps({"n": config.n, "f": config.f, "adversary": config.adversary, **summary},
                         sort_keys=True))
        if summary["violations"] or summary["completed_runs"] < summary["runs"]:
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
