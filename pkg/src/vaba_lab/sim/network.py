"""Deterministic discrete-event asynchronous network.

Time is the index of the delivery event.  Pending envelopes sit in a
*free* pool or in *held* groups chosen by the adversary strategy; the
scheduler draws uniformly from the free pool, falls back to held
envelopes when nothing else is pending, and force-delivers anything
older than ``max_age`` events so no honest message is starved forever.
"""

from __future__ import annotations

import random
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Optional

from vaba_lab.crypto import Dealer
from vaba_lab.engine import Party
from vaba_lab.messages import Envelope
from vaba_lab.sim.adversary import (
    FREE,
    ByzantineNode,
    CrashedNode,
    HonestNode,
    Strategy,
    make_strategy,
)
from vaba_lab.sim.metrics import GroundTruth, RunMetrics
from vaba_lab.validators import make_invalid_value, make_validator, make_value


HALT_POLICIES = ("all-decided", "event-budget")


@dataclass(slots=True)
class ScheduleEvent:
    seq: int
    envelope: Envelope
    sent_at: int
    deliverable_at: int = 0  # priority class assigned by the strategy
    group: object = None


class PendingPool:
    """Bag of events with O(1) uniform sampling and removal by sequence number."""

    def __init__(self):
        self.items: list[ScheduleEvent] = []
        self.pos: dict[int, int] = {}

    def __len__(self):
        return len(self.items)

    def push(self, ev: ScheduleEvent) -> None:
        self.pos[ev.seq] = len(self.items)
        self.items.append(ev)

    def pop_at(self, i: int) -> ScheduleEvent:
        ev = self.items[i]
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last.seq] = i
        del self.pos[ev.seq]
        return ev

    def remove(self, seq: int) -> Optional[ScheduleEvent]:
        i = self.pos.get(seq)
        return None if i is None else self.pop_at(i)


class Network:
    def __init__(self):
        self.free = PendingPool()
        self.held: dict[object, PendingPool] = {}
        self.where: dict[int, PendingPool] = {}
        self.order: deque[ScheduleEvent] = deque()
        self.seq = 0

    def __len__(self):
        return len(self.where)

    def push(self, env: Envelope, now: int, cls: int, group) -> ScheduleEvent:
        ev = ScheduleEvent(self.seq, env, now, cls, group)
        self.seq += 1
        pool = self.free if cls == FREE else self.held.setdefault(group, PendingPool())
        pool.push(ev)
        self.where[ev.seq] = pool
        self.order.append(ev)
        return ev

    def take(self, ev: ScheduleEvent) -> None:
        pool = self.where.pop(ev.seq)
        pool.remove(ev.seq)

    def release(self, group) -> None:
        pool = self.held.pop(group, None)
        if pool is None:
            return
        for ev in pool.items:
            ev.deliverable_at = FREE
            self.free.push(ev)
            self.where[ev.seq] = self.free

    def drop_from(self, sender: int) -> int:
        """Suppress every pending envelope sent by ``sender``."""
        doomed = [ev for ev in self.order if ev.seq in self.where and ev.envelope.sender == sender]
        for ev in doomed:
            self.take(ev)
        return len(doomed)

    def oldest(self) -> Optional[ScheduleEvent]:
        while self.order and self.order[0].seq not in self.where:
            self.order.popleft()
        return self.order[0] if self.order else None


def scheduler_next(net: Network, strategy: Strategy, rng: random.Random, now: int,
                   max_age: int) -> ScheduleEvent:
    """Pick (and remove) the next envelope to deliver."""
    oldest = net.oldest()
    if oldest is not None and now - oldest.sent_at > max_age:
        ev = oldest
    elif len(net.free):
        ev = net.free.items[rng.randrange(len(net.free))]
    else:
        group = min(net.held, key=_group_order)
        pool = net.held[group]
        ev = pool.items[rng.randrange(len(pool))]
    net.take(ev)
    for g in [g for g, p in net.held.items() if not len(p)]:
        del net.held[g]
    return ev


def _group_order(g):
    return (0, g) if isinstance(g, int) else (1, repr(g))


class Simulation:
    """One run: parties, adversary, network and ground-truth checker."""

    instance_id = b"vaba"

    def __init__(self, n: int, f: int, adversary, validator: str, seed: int,
                 max_events: int = 1_000_000, max_age: int = 100_000, trace: bool = False,
                 halt_policy: str = "all-decided"):
        if n < 3 * f + 1:
            raise ValueError(f"need n >= 3f+1, got n={n}, f={f}")
        self.n, self.f, self.seed = n, f, seed
        self.max_events = max_events
        self.max_age = max_age
        if halt_policy not in HALT_POLICIES:
            raise ValueError(f"unknown halt policy {halt_policy!r}")
        self.halt_policy = halt_policy
        self.trace_enabled = trace
        self.trace: list[dict] = []

        self.dealer = Dealer.setup(n, f, seed)
        public = self.dealer.public
        self.sched_rng = random.Random(f"sched:{seed}")
        adv_rng = random.Random(f"adversary:{seed}")
        self.strategy = make_strategy(adversary, n, f, public, adv_rng, self.instance_id)
        self.validator_name = validator
        self.app_validator = make_validator(validator, self.dealer)
        self.inputs = {i: make_value(validator, self.dealer, i + 1) for i in range(n)}

        self.checker = GroundTruth(n, f, self.instance_id, public, self.is_honest)
        self.net = Network()
        self.now = 0
        self.words_per_view: dict = defaultdict(int)
        self.words_by_kind: dict = defaultdict(lambda: defaultdict(int))
        self.max_delay = 0
        self.last_decision_at = 0

        for p in self.strategy.initial_corruption():
            self.strategy.corrupt(p)
        self.initially_honest = self.honest_parties()
        self.nodes = [self._make_node(i) for i in range(n)]
        self._state = {i: (0, 0) for i in range(n)}

    def is_honest(self, p: int) -> bool:
        return p not in self.strategy.corrupted

    def _make_node(self, i: int):
        keys = self.dealer.party(i)
        if self.is_honest(i):
            party = Party(i, keys, self.inputs[i], self.app_validator, self.instance_id, self.checker)
            return HonestNode(party)
        mode = self.strategy.behaviour
        if mode == "crash":
            return CrashedNode(i)
        # Byzantine parties keep their own instance of the honest code for
        # receiving; the checker ignores them since is_honest() is False
        party = Party(i, keys, self.inputs[i], self.app_validator, self.instance_id, self.checker)
        name = self.validator_name
        return ByzantineNode(
            party, mode, keys, random.Random(f"byz:{self.seed}:{i}"),
            lambda label: make_value(name, self.dealer, label),
            lambda label: make_invalid_value(name, label),
        )

    # -- sending / delivering ----------------------------------------------------

    def _send(self, envs) -> None:
        for env in envs:
            if not 0 <= env.dest < self.n:
                continue
            if self.is_honest(env.sender):
                view = env.view or 0
                self.words_per_view[view] += env.words
                self.words_by_kind[view][env.kind] += env.words
            self.checker.audit(env, self.checker.leader_of)
            cls, group = self.strategy.classify(env)
            self.net.push(env, self.now, cls, group)
            to_corrupt, releases = self.strategy.observe(env)
            for g in releases:
                self.net.release(g)
            for p in to_corrupt:
                self.corrupt(p)

    def corrupt(self, p: int) -> None:
        """Adaptive corruption: p goes silent and its undelivered messages vanish."""
        self.strategy.corrupt(p)
        self.nodes[p] = CrashedNode(p)
        self.net.drop_from(p)

    def honest_parties(self) -> list[int]:
        return [i for i in range(self.n) if self.is_honest(i)]

    def all_honest_decided(self) -> bool:
        return all(self.nodes[i].party.decided_view is not None for i in self.honest_parties())

    def _halt(self) -> bool:
        # "event-budget" keeps every party running for max_events deliveries
        return self.halt_policy == "all-decided" and self.all_honest_decided()

    def run(self) -> RunMetrics:
        for node in list(self.nodes):
            self._send(node.start())
            self._check_state()
        while len(self.net) and self.now < self.max_events and not self._halt():
            ev = scheduler_next(self.net, self.strategy, self.sched_rng, self.now, self.max_age)
            self.now += 1
            env = ev.envelope
            self.max_delay = max(self.max_delay, self.now - ev.sent_at)
            if self.trace_enabled:
                self.trace.append({
                    "t": self.now, "view": env.view, "kind": env.kind,
                    "from": env.sender, "to": env.dest, "words": env.words,
                })
            node = self.nodes[env.dest]
            decided_before = node.party is not None and node.party.decided_view is not None
            self._send(node.handle(env))
            if node.party is not None and not decided_before and node.party.decided_view is not None:
                if self.is_honest(env.dest):
                    self.last_decision_at = self.now
            self._check_state(env.dest)
        return self.metrics()

    def _check_state(self, only: Optional[int] = None) -> None:
        parties = [only] if only is not None else range(self.n)
        for i in parties:
            if not self.is_honest(i):
                continue
            party = self.nodes[i].party
            cur = (party.lock, party.key.view)
            self.checker.check_monotone(i, self._state[i], cur)
            self._state[i] = cur

    # -- results -------------------------------------------------------------------

    def metrics(self) -> RunMetrics:
        honest = self.honest_parties()
        m = RunMetrics(self.seed, self.n, self.f, self.strategy.kind.value)
        m.events = self.now
        m.honest = honest
        m.corrupted = sorted(self.strategy.corrupted)
        m.completed = self.all_honest_decided()
        m.words_per_view = {v: c for v, c in sorted(self.words_per_view.items()) if v > 0}
        m.words_by_kind = {v: dict(sorted(k.items())) for v, k in sorted(self.words_by_kind.items())}
        for i in honest:
            party = self.nodes[i].party
            if party.decided_view is not None:
                m.views_to_decide[i] = party.decided_view
                m.decided_values[i] = party.decided
            for a in party.anomalies:
                self.checker.violation("party-anomaly", f"party {i}: {a}")
        if self.max_delay:
            m.duration = self.last_decision_at / self.max_delay
        # an adaptively corrupted party still proposed its input while honest
        honest_inputs = {repr(self.inputs[i]) for i in self.initially_honest}
        decided = {repr(v) for v in m.decided_values.values()}
        if len(decided) > 1:
            self.checker.violation("agreement", f"honest parties decided {sorted(decided)}")
        for i, v in m.decided_values.items():
            if not self.app_validator(v):
                self.checker.violation("validity", f"party {i} decided invalid {v!r}")
        m.quality_flag = bool(decided) and decided <= honest_inputs
        for node in self.nodes:
            if isinstance(node, ByzantineNode) and node.forged_conflicts:
                self.checker.violation("pb-provability", f"party {node.pid} formed conflicting proofs")
        m.leader_completed = dict(self.checker.leader_completed)
        m.completed_at_first_elect = dict(self.checker.first_elect)
        m.violations = {k: list(v) for k, v in sorted(self.checker.violations.items())}
        return m
