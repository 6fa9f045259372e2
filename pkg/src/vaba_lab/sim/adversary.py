"""Adversary strategies: message scheduling, corruption and Byzantine behaviour.

A strategy only ever sees envelopes (as they are sent) and the public
verification keys.  Corrupted parties are driven by
:class:`ByzantineNode`, which owns that party's key material and emits
raw envelopes; honest :class:`~vaba_lab.engine.Party` code is never
modified to misbehave.
"""

from __future__ import annotations

import enum
import random
from dataclasses import replace
from typing import Callable

from vaba_lab.broadcast import PbMessage, signed_payload
from vaba_lab.crypto import PartyKeys, PublicKeys, SignatureShare, ThresholdSignature
from vaba_lab.engine import Party, ViewChangeMessage, skip_payload
from vaba_lab.messages import ACK, COIN_SHARE, DONE, SEND, SKIP, SKIP_SHARE, VIEW_CHANGE, Envelope
from vaba_lab.staged import STAGES, StagedSender, stage_instance


class AdversaryKind(enum.Enum):
    FAIR_RANDOM = "fair"
    CRASH_F = "crash"
    EQUIVOCATE_SENDERS = "equivocate"
    DELAY_LEADER = "delay-leader"
    ADAPTIVE_CORRUPT_LEADER = "adaptive"

    @classmethod
    def parse(cls, name) -> "AdversaryKind":
        if isinstance(name, cls):
            return name
        for kind in cls:
            if name in (kind.value, kind.name):
                return kind
        raise ValueError(f"unknown adversary {name!r}; choose from {[k.value for k in cls]}")


FREE = 0
HELD = 1


class Strategy:
    """Base strategy: fair random scheduling, no corruption."""

    kind = AdversaryKind.FAIR_RANDOM
    behaviour = None  # Byzantine behaviour for corrupted parties

    def __init__(self, n: int, f: int, public: PublicKeys, rng: random.Random, instance_id=b"vaba"):
        self.n = n
        self.f = f
        self.public = public
        self.rng = rng
        self.instance_id = instance_id
        self.corrupted: set[int] = set()

    def initial_corruption(self) -> list[int]:
        return []

    def classify(self, env: Envelope) -> tuple:
        """Priority class of a freshly sent envelope: ``(FREE, None)`` or ``(HELD, group)``."""
        return FREE, None

    def observe(self, env: Envelope) -> tuple[list[int], list]:
        """See a sent envelope; returns ``(parties to corrupt, held groups to release)``."""
        return [], []

    def corrupt(self, party: int) -> None:
        if party in self.corrupted:
            return
        if len(self.corrupted) >= self.f:
            raise RuntimeError("corruption budget exhausted")
        self.corrupted.add(party)

    def _random_parties(self, count: int) -> list[int]:
        return sorted(self.rng.sample(range(self.n), count))


class FairRandom(Strategy):
    pass


class CrashF(Strategy):
    """f parties, chosen at random, crash before view 1."""

    kind = AdversaryKind.CRASH_F
    behaviour = "crash"

    def initial_corruption(self):
        return self._random_parties(self.f)


class EquivocateSenders(Strategy):
    """f corrupted senders split their proposals between two values and spray junk."""

    kind = AdversaryKind.EQUIVOCATE_SENDERS
    behaviour = "equivocate"

    def initial_corruption(self):
        return self._random_parties(self.f)


class DelayLeader(Strategy):
    """f Byzantine proposers; honest senders' stage-4 traffic is starved until skip fires.

    Held envelopes are still delivered whenever nothing else is pending,
    so nothing between honest parties is dropped.
    """

    kind = AdversaryKind.DELAY_LEADER
    behaviour = "propose"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.skipped: set[int] = set()

    def initial_corruption(self):
        return self._random_parties(self.f)

    def classify(self, env):
        if env.kind not in (SEND, ACK) or env.view in self.skipped:
            return FREE, None
        try:
            (_iid, sender, _view), stage = env.instance
        except (TypeError, ValueError):
            return FREE, None
        if stage == STAGES and sender not in self.corrupted:
            return HELD, env.view
        return FREE, None

    def observe(self, env):
        if env.kind == SKIP and env.view not in self.skipped:
            if self.public.threshold_validate(skip_payload(self.instance_id, env.view), env.payload):
                self.skipped.add(env.view)
                return [], [env.view]
        return [], []


class AdaptiveCorruptLeader(Strategy):
    """Corrupts (and silences) each view's leader once f+1 coin shares reveal it."""

    kind = AdversaryKind.ADAPTIVE_CORRUPT_LEADER
    behaviour = "crash"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.coin_shares: dict = {}
        self.resolved: set = set()
        self.leaders: dict = {}

    def observe(self, env):
        if env.kind != COIN_SHARE or env.instance in self.resolved:
            return [], []
        eid = env.instance
        if not self.public.coin_share_validate(eid, env.sender, env.payload):
            return [], []
        shares = self.coin_shares.setdefault(eid, {})
        shares[env.sender] = env.payload
        if len(shares) < self.public.coin_threshold:
            return [], []
        self.resolved.add(eid)
        leader = self.public.coin_toss(eid, shares.values())
        self.leaders[eid] = leader
        if leader in self.corrupted or len(self.corrupted) >= self.f:
            return [], []
        return [leader], []

    def predict(self, eid) -> int:
        """Best guess of the leader for ``eid`` from wire-visible shares only."""
        if eid in self.leaders:
            return self.leaders[eid]
        seen = self.coin_shares.get(eid, {})
        mix = b"".join(sh.tag for _, sh in sorted(seen.items()))
        return int.from_bytes(mix[:8] or b"\x00", "big") % self.n


STRATEGIES = {
    AdversaryKind.FAIR_RANDOM: FairRandom,
    AdversaryKind.CRASH_F: CrashF,
    AdversaryKind.EQUIVOCATE_SENDERS: EquivocateSenders,
    AdversaryKind.DELAY_LEADER: DelayLeader,
    AdversaryKind.ADAPTIVE_CORRUPT_LEADER: AdaptiveCorruptLeader,
}


def make_strategy(kind, n: int, f: int, public: PublicKeys, rng: random.Random,
                  instance_id=b"vaba") -> Strategy:
    return STRATEGIES[AdversaryKind.parse(kind)](n, f, public, rng, instance_id)


# -- Byzantine parties -------------------------------------------------------------


class HonestNode:
    def __init__(self, party: Party):
        self.party = party
        self.pid = party.pid

    def start(self) -> list[Envelope]:
        return self.party.start()

    def handle(self, env: Envelope) -> list[Envelope]:
        return self.party.handle(env)


class CrashedNode:
    def __init__(self, pid: int):
        self.pid = pid
        self.party = None

    def start(self):
        return []

    def handle(self, env):
        return []


class ByzantineNode:
    """A corrupted party that follows the protocol as a receiver but controls its own broadcast.

    ``proposals(view)`` decides what the party broadcasts in each view:
    ``propose`` sends one Byzantine-origin value to everyone with an empty
    key; ``equivocate`` sends two different values to two halves of the
    other parties and also sprays invalid traffic.
    """

    def __init__(self, party: Party, mode: str, keys: PartyKeys, rng: random.Random,
                 make_value: Callable[[int], object], make_invalid: Callable[[int], object]):
        self.party = party
        self.pid = party.pid
        self.mode = mode
        self.keys = keys
        self.public = keys.public
        self.rng = rng
        self.make_value = make_value
        self.make_invalid = make_invalid
        self.iid = party.instance_id
        self.senders: dict[int, list[StagedSender]] = {}
        self.done_sent: set[int] = set()
        self.forged_conflicts = 0

    def start(self):
        return self._filter(self.party.start())

    def handle(self, env):
        if env.kind == ACK and self._own_instance(env):
            return self._on_own_ack(env)
        return self._filter(self.party.handle(env))

    def _own_instance(self, env) -> bool:
        try:
            (_iid, k, _view), _stage = env.instance
        except (TypeError, ValueError):
            return False
        return k == self.pid

    def _filter(self, envs):
        out = []
        for env in envs:
            if env.kind == SEND and self._own_instance(env):
                (_b, stage) = env.instance
                if stage == 1 and env.dest == self.pid:
                    out += self._begin_view(env.view)
                continue
            if env.kind == DONE and env.sender == self.pid:
                continue
            out.append(env)
        return out

    # -- own broadcast -------------------------------------------------------------

    def proposals(self, view: int) -> list[tuple]:
        others = [k for k in range(self.public.n) if k != self.pid]
        fresh = self.make_value(1000 + 10 * self.pid)
        if self.mode == "propose":
            return [(fresh, (0, None), others)]
        self.rng.shuffle(others)
        half = len(others) // 2
        key = self.party.key
        if key.view > 0:
            second = (key.value, (key.view, key.proof))
        else:
            second = (self.make_value(1000 + 10 * self.pid + 1), (0, None))
        return [(fresh, (0, None), others[:half]), (second[0], second[1], others[half:])]

    def _begin_view(self, view: int) -> list[Envelope]:
        base = (self.iid, self.pid, view)
        out = []
        if self.mode == "equivocate":
            out += self._junk(view, base)
        senders = []
        for value, key_proof, recipients in self.proposals(view):
            s = StagedSender(base, self.pid, self.public, value, key_proof, recipients)
            senders.append(s)
            out += self._stamp(s.start(), view)
        self.senders[view] = senders
        for s in senders:
            out += self._self_ack(s, view)
        return out

    def _self_ack(self, sender: StagedSender, view: int) -> list[Envelope]:
        stage = sender.stage
        share = self.keys.share_sign(signed_payload(stage_instance(sender.base_id, stage), sender.value))
        return self._advance(sender, view, stage, self.pid, share)

    def _advance(self, sender, view, stage, frm, share) -> list[Envelope]:
        envs, completion = sender.on_ack(stage, frm, share)
        out = self._stamp(envs, view)
        if envs:
            out += self._self_ack(sender, view)
        if completion is not None:
            self._check_conflicts(view, stage)
            if view not in self.done_sent:
                self.done_sent.add(view)
                payload = (sender.value, sender.sigma_ex, completion)
                out += [Envelope(DONE, self.pid, k, payload, None, view) for k in range(self.public.n)]
        elif envs:
            self._check_conflicts(view, stage)
        return out

    def _check_conflicts(self, view, stage):
        done = [s for s in self.senders.get(view, []) if stage in s.senders and s.senders[stage].completed]
        if len({repr(s.value) for s in done}) > 1:
            self.forged_conflicts += 1

    def _on_own_ack(self, env):
        view = env.view
        (_b, stage) = env.instance
        out = []
        for s in self.senders.get(view, []):
            out += self._advance(s, view, stage, env.sender, env.payload)
        return out

    # -- junk traffic ----------------------------------------------------------------

    def _junk(self, view: int, base) -> list[Envelope]:
        n = self.public.n
        me = self.pid
        bogus_share = SignatureShare(me, b"\x00" * 32, b"\x00" * 32)
        bogus_sig = ThresholdSignature(b"\x00" * 32, frozenset([bogus_share]))
        bad_value = self.make_invalid(1000 + 10 * me + 2)
        if bad_value is None:
            bad_msg = (self.make_value(1000 + 10 * me + 2), (1, bogus_sig))
        else:
            bad_msg = (bad_value, (0, None))
        junk_send = PbMessage(bad_msg[0], (bad_msg[1], None))
        vc = ViewChangeMessage((0, bogus_sig), (0, bogus_sig), (0, bogus_sig))
        wrong_view_share = self.keys.share_sign(("not-skip", view))
        out = []
        for k in range(n):
            if k == me:
                continue
            out.append(Envelope(SEND, me, k, junk_send, stage_instance(base, 1), view))
            out.append(Envelope(SKIP_SHARE, me, k, wrong_view_share, None, view))
            out.append(Envelope(SKIP, me, k, bogus_sig, None, view))
            out.append(Envelope(DONE, me, k, (0, (0, None), bogus_sig), None, view))
            out.append(Envelope(VIEW_CHANGE, me, k, vc, None, view))
        return out

    @staticmethod
    def _stamp(envs, view):
        return [replace(e, view=view) for e in envs]
