"""Simulation harness: network, adversaries, metrics and experiment runner."""

from vaba_lab.sim.adversary import AdversaryKind
from vaba_lab.sim.metrics import RunMetrics, aggregate
from vaba_lab.sim.network import Simulation, scheduler_next
from vaba_lab.sim.runner import ExperimentConfig, execute, run_many, run_one

__all__ = [
    "AdversaryKind",
    "ExperimentConfig",
    "RunMetrics",
    "Simulation",
    "aggregate",
    "execute",
    "run_many",
    "run_one",
    "scheduler_next",
]
