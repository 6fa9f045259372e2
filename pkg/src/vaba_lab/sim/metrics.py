"""Run measurements, ground-truth invariant checks and aggregation."""

from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from vaba_lab.engine import Observer
from vaba_lab.messages import DONE, SEND, VIEW_CHANGE, Envelope
from vaba_lab.staged import stage_payload


@dataclass
class RunMetrics:
    seed: int
    n: int
    f: int
    adversary: str
    completed: bool = False
    events: int = 0
    words_per_view: dict = field(default_factory=dict)
    words_by_kind: dict = field(default_factory=dict)  # view -> kind -> count
    views_to_decide: dict = field(default_factory=dict)  # party -> view
    decided_values: dict = field(default_factory=dict)
    honest: list = field(default_factory=list)
    corrupted: list = field(default_factory=list)
    duration: float = 0.0
    quality_flag: bool = False
    leader_completed: dict = field(default_factory=dict)  # view -> bool, at first election
    completed_at_first_elect: dict = field(default_factory=dict)  # view -> count
    violations: dict = field(default_factory=dict)  # kind -> list of messages

    @property
    def max_views(self) -> Optional[int]:
        if not self.views_to_decide:
            return None
        return max(self.views_to_decide.values())

    @property
    def all_decided_view1(self) -> bool:
        return bool(self.honest) and all(self.views_to_decide.get(p) == 1 for p in self.honest)

    @property
    def words_view1(self) -> int:
        return self.words_per_view.get(1, 0)

    @property
    def max_words_per_view(self) -> int:
        return max(self.words_per_view.values(), default=0)

    def violation_count(self) -> int:
        return sum(len(v) for v in self.violations.values())


class GroundTruth(Observer):
    """Simulator-side oracle: sees everything, feeds nothing back to parties or adversary."""

    def __init__(self, n: int, f: int, instance_id, public, is_honest: Callable[[int], bool]):
        self.n = n
        self.f = f
        self.instance_id = instance_id
        self.public = public
        self.is_honest = is_honest
        self.entered: dict[int, set] = defaultdict(set)
        # (base_id, stage) -> value -> honest parties that delivered it
        self.pb_deliveries: dict = defaultdict(lambda: defaultdict(set))
        self.first_elect: dict[int, int] = {}
        self.leader_of: dict[int, int] = {}
        self.leader_completed: dict[int, bool] = {}
        self.decisions: dict[int, tuple] = {}
        self.proven: dict = defaultdict(set)  # base_id -> values with some valid stage proof
        self._audited: set = set()
        self.violations: dict[str, list] = defaultdict(list)

    def violation(self, kind: str, msg: str) -> None:
        self.violations[kind].append(msg)

    # -- party hooks ---------------------------------------------------------

    def on_enter_view(self, party, view):
        if not self.is_honest(party):
            return
        self.entered[view].add(party)
        if view >= 3:
            moved = sum(1 for p in self.entered[view - 1] if self.is_honest(p))
            if moved < self.f + 1:
                self.violation(
                    "view-skipping",
                    f"party {party} entered view {view} while only {moved} honest reached {view - 1}",
                )

    def on_pb_deliver(self, party, base_id, stage, value):
        if self.is_honest(party):
            self.pb_deliveries[(base_id, stage)][value].add(party)

    def _broadcast_completed(self, k: int, view: int) -> bool:
        per_value = self.pb_deliveries.get(((self.instance_id, k, view), 4), {})
        return any(len(s) >= self.f + 1 for s in per_value.values())

    def completed_broadcasts(self, view: int) -> int:
        """Staged broadcasts of ``view`` with f+1 honest commit deliveries so far."""
        return sum(self._broadcast_completed(k, view) for k in range(self.n))

    def on_elect_invoke(self, party, view):
        if not self.is_honest(party) or view in self.first_elect:
            return
        count = self.completed_broadcasts(view)
        self.first_elect[view] = count
        if count < 2 * self.f + 1:
            self.violation(
                "pre-election-completion",
                f"view {view}: only {count} broadcasts completed before the first elect",
            )

    def on_elect(self, party, view, leader):
        if not self.is_honest(party):
            return
        prev = self.leader_of.setdefault(view, leader)
        if prev != leader:
            self.violation("election-agreement", f"view {view}: leaders {prev} and {leader}")
        if view not in self.leader_completed:
            self.leader_completed[view] = self._broadcast_completed(leader, view)

    def on_decide(self, party, view, value):
        if self.is_honest(party):
            self.decisions[party] = (view, value)

    # -- proof auditing on the wire --------------------------------------------------

    def _record_proof(self, base_id, stage: int, value, sigma) -> None:
        key = (base_id, stage, sigma)
        if key in self._audited:
            return
        self._audited.add(key)
        try:
            ok = self.public.threshold_validate(stage_payload(base_id, stage, value), sigma)
        except TypeError:
            ok = False
        if not ok:
            return
        values = self.proven[base_id]
        values.add(value)
        if len(values) > 1:
            self.violation("pb-provability", f"{base_id!r}: valid proofs for {sorted(map(repr, values))}")
        honest = self.pb_deliveries.get((base_id, stage), {}).get(value, set())
        if len(honest) < self.f + 1:
            # deliveries are recorded while the party was honest, even if corrupted later
            self.violation(
                "pb-provability-delivery",
                f"{base_id!r} stage {stage}: proof exists but only {len(honest)} honest deliveries",
            )

    def audit(self, env: Envelope, leaders: dict) -> None:
        """Check every threshold signature that travels on the wire."""
        try:
            if env.kind == SEND:
                (base_id, stage) = env.instance
                if isinstance(stage, int) and stage > 1:
                    self._record_proof(base_id, stage - 1, env.payload.value, env.payload.proof[1])
            elif env.kind == DONE:
                value, _kp, sigma = env.payload
                self._record_proof((self.instance_id, env.sender, env.view), 4, value, sigma)
            elif env.kind == VIEW_CHANGE:
                leader = leaders.get(env.view)
                if leader is None:
                    return
                base = (self.instance_id, leader, env.view)
                for stage, slot in ((1, env.payload.key_slot), (2, env.payload.lock_slot),
                                    (3, env.payload.commit_slot)):
                    if slot is not None:
                        self._record_proof(base, stage, slot[0], slot[1])
        except (AttributeError, TypeError, ValueError, IndexError):
            return

    # -- state checks ------------------------------------------------------------

    def check_monotone(self, party: int, prev: tuple, cur: tuple) -> None:
        if cur[0] < prev[0]:
            self.violation("lock-monotonicity", f"party {party}: LOCK {prev[0]} -> {cur[0]}")
        if cur[1] < prev[1]:
            self.violation("key-monotonicity", f"party {party}: KEY.view {prev[1]} -> {cur[1]}")


def aggregate(metrics: list) -> dict:
    """Summary statistics over a batch of runs."""
    if not metrics:
        raise ValueError("aggregate() needs at least one run")
    views = [m.max_views for m in metrics if m.max_views is not None]
    words_ratio = [m.max_words_per_view / (m.n * m.n) for m in metrics]
    durations = [m.duration for m in metrics if m.completed]
    summary: dict[str, Any] = {
        "runs": len(metrics),
        "completed_runs": sum(m.completed for m in metrics),
        "p_decide_view1": sum(m.all_decided_view1 for m in metrics) / len(metrics),
        "mean_views_to_decide": statistics.fmean(views) if views else None,
        "views_quantiles": _quantiles(views),
        "max_words_per_view_over_n2": max(words_ratio),
        "mean_words_view1": statistics.fmean(m.words_view1 for m in metrics),
        "quality_rate": sum(m.quality_flag for m in metrics) / len(metrics),
        "mean_duration": statistics.fmean(durations) if durations else None,
        "violations": sum(m.violation_count() for m in metrics),
    }
    return summary


def _quantiles(xs: list) -> dict:
    if not xs:
        return {}
    s = sorted(xs)

    def q(p):
        return s[min(len(s) - 1, int(p * len(s)))]

    return {"p50": q(0.5), "p90": q(0.9), "p99": q(0.99), "max": s[-1]}
