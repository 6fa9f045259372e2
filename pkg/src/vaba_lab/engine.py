"""Per-party VABA state machine.

Each view runs ``n`` concurrent 4-stage broadcasts, aggregates ``done``
notifications into a threshold ``skip`` signature, elects a leader with
the threshold coin, and exchanges the leader's key/lock/commit
deliveries in a view-change.  Cross-view safety comes from the LOCK and
KEY variables: a proposal is only accepted if it carries a key from a
view no older than the receiver's LOCK.

The party is purely event driven: :meth:`Party.start` and
:meth:`Party.handle` return the envelopes to put on the network.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Optional

from vaba_lab.crypto import PartyKeys, ThresholdSignature
from vaba_lab.election import ElectionState
from vaba_lab.messages import (
    ACK,
    COIN_SHARE,
    DONE,
    SEND,
    SKIP,
    SKIP_SHARE,
    VIEW_CHANGE,
    Envelope,
)
from vaba_lab.staged import (
    COMMIT,
    KEY,
    LOCK,
    STAGES,
    StagedReceiver,
    StagedSender,
    stage_payload,
)
from vaba_lab.validators import AppValidator


@dataclass(frozen=True)
class KeyRecord:
    view: int
    value: Any
    proof: Optional[ThresholdSignature]


@dataclass(frozen=True)
class ViewChangeMessage:
    """The leader's deliveries as seen by one party; each slot is ``(v, sigma)`` or None."""

    key_slot: Optional[tuple] = None
    lock_slot: Optional[tuple] = None
    commit_slot: Optional[tuple] = None


class Observer:
    """Ground-truth hooks for the harness.  Honest behaviour never depends on them."""

    def on_enter_view(self, party: int, view: int) -> None: ...

    def on_pb_deliver(self, party: int, base_id, stage: int, value) -> None: ...

    def on_elect_invoke(self, party: int, view: int) -> None: ...

    def on_elect(self, party: int, view: int, leader: int) -> None: ...

    def on_decide(self, party: int, view: int, value) -> None: ...


def skip_payload(instance_id, view: int) -> tuple:
    return (instance_id, "skip", view)


def key_payload(instance_id, leader: int, view: int, value) -> tuple:
    """Signed tuple a key for ``view`` must validate: ``<<<id, L[view], view>, 1>, v>``."""
    return stage_payload((instance_id, leader, view), 1, value)


def _pair(x) -> bool:
    return isinstance(x, tuple) and len(x) == 2


class ViewState:
    def __init__(self, view: int, value, key_proof: tuple):
        self.view = view
        self.value = value
        self.key_proof = key_proof
        self.leader: Optional[int] = None
        self.receivers: dict[int, StagedReceiver] = {}
        self.sender: Optional[StagedSender] = None
        self.election: Optional[ElectionState] = None
        self.done_from: set[int] = set()
        self.skip_share_sent = False
        self.skip_shares: dict = {}
        self.skip_sent = False
        self.skip = False
        self.deliveries: dict[str, dict[int, tuple]] = {KEY: {}, LOCK: {}, COMMIT: {}}
        self.vc_from: set[int] = set()
        self.vc_pending: list[Envelope] = []
        self.finished = False

    @property
    def done_count(self) -> int:
        return len(self.done_from)


class Party:
    """One honest VABA participant."""

    def __init__(self, pid: int, keys: PartyKeys, input_value, app_validator: AppValidator,
                 instance_id=b"vaba", observer: Optional[Observer] = None):
        self.pid = pid
        self.keys = keys
        self.public = keys.public
        self.n = self.public.n
        self.f = self.public.f
        self.quorum = 2 * self.f + 1
        self.input_value = input_value
        self.app_validator = app_validator
        self.instance_id = instance_id
        self.observer = observer or Observer()

        self.lock = 0
        self.key = KeyRecord(0, input_value, None)
        self.view = 0
        self.decided = None
        self.decided_view: Optional[int] = None
        self.leaders: dict[int, int] = {}
        self.views: dict[int, ViewState] = {}
        self.anomalies: list[str] = []
        self._future: dict[int, list[Envelope]] = {}

    # -- helpers -------------------------------------------------------------

    def _to_all(self, kind: str, view: int, payload, instance=None) -> list[Envelope]:
        return [Envelope(kind, self.pid, k, payload, instance, view) for k in range(self.n)]

    @staticmethod
    def _stamp(envs, view: int) -> list[Envelope]:
        return [replace(e, view=view) for e in envs]

    # -- external validity of proposals ---------------------------------------

    def ex_bc_validation(self, base_id, value, sigma_ex) -> bool:
        """Accept ``<v, <j_key, sigma>>`` iff v is app-valid, the key is valid and j_key >= LOCK."""
        if not self.app_validator(value):
            return False
        if not _pair(sigma_ex):
            return False
        key_view, proof = sigma_ex
        if not isinstance(key_view, int) or isinstance(key_view, bool) or key_view < 0:
            return False
        if key_view == 0:
            if proof is not None:
                return False
        else:
            # validated against the leader of the key's own view
            leader = self.leaders.get(key_view)
            if leader is None:
                return False
            if not self.public.threshold_validate(
                key_payload(self.instance_id, leader, key_view, value), proof
            ):
                return False
        return key_view >= self.lock

    # -- view lifecycle ------------------------------------------------------------

    def start(self) -> list[Envelope]:
        if self.view:
            raise RuntimeError("party already started")
        return self._enter_view(1)

    def _enter_view(self, j: int) -> list[Envelope]:
        self.view = j
        vs = ViewState(j, self.key.value, (self.key.view, self.key.proof))
        self.views[j] = vs
        iid = self.instance_id
        for k in range(self.n):
            vs.receivers[k] = StagedReceiver((iid, k, j), k, self.keys, self.ex_bc_validation)
        vs.sender = StagedSender((iid, self.pid, j), self.pid, self.public, vs.value, vs.key_proof)
        vs.election = ElectionState((iid, j), self.keys)
        self.observer.on_enter_view(self.pid, j)
        out = self._stamp(vs.sender.start(), j)
        for env in self._future.pop(j, []):
            out += self.handle(env)
        return out

    def _finish_view(self, vs: ViewState) -> list[Envelope]:
        vs.finished = True
        vs.receivers = {}
        return self._enter_view(vs.view + 1)

    # -- dispatch ----------------------------------------------------------------

    def handle(self, env: Envelope) -> list[Envelope]:
        j = env.view
        if not isinstance(j, int) or j < 1 or env.dest != self.pid:
            return []
        if j > self.view:
            self._future.setdefault(j, []).append(env)
            return []
        handler = self._handlers.get(env.kind)
        if handler is None:
            return []
        return handler(self, env)

    def _on_send(self, env: Envelope) -> list[Envelope]:
        parsed = self._parse_instance(env)
        if parsed is None:
            return []
        k, j, stage = parsed
        if j != self.view:
            return []
        vs = self.views[j]
        rec = vs.receivers.get(k)
        if rec is None:
            return []
        delivery, ack, delivered = rec.on_send(stage, env.sender, env.payload)
        if delivered:
            self.observer.on_pb_deliver(self.pid, (self.instance_id, k, j), stage, env.payload.value)
        if delivery is not None:
            vs.deliveries[delivery.kind][k] = (delivery.value, delivery.proof)
        return self._stamp([ack], j) if ack is not None else []

    def _on_ack(self, env: Envelope) -> list[Envelope]:
        parsed = self._parse_instance(env)
        if parsed is None:
            return []
        k, j, stage = parsed
        if k != self.pid or j != self.view:
            return []
        vs = self.views[j]
        envs, completion = vs.sender.on_ack(stage, env.sender, env.payload)
        out = self._stamp(envs, j)
        if completion is not None and not vs.skip:
            out += self._to_all(DONE, j, (vs.value, vs.key_proof, completion))
        return out

    def _on_done(self, env: Envelope) -> list[Envelope]:
        j = env.view
        if j != self.view:
            return []
        vs = self.views[j]
        payload = env.payload
        if env.sender in vs.done_from or not (isinstance(payload, tuple) and len(payload) == 3):
            return []
        value, _key_proof, sigma = payload
        signed = stage_payload((self.instance_id, env.sender, j), STAGES, value)
        if not self.public.threshold_validate(signed, sigma):
            return []
        vs.done_from.add(env.sender)
        if vs.done_count >= self.quorum and not vs.skip_share_sent:
            vs.skip_share_sent = True
            share = self.keys.share_sign(skip_payload(self.instance_id, j))
            return self._to_all(SKIP_SHARE, j, share)
        return []

    def _on_skip_share(self, env: Envelope) -> list[Envelope]:
        j = env.view
        if j != self.view:
            return []
        vs = self.views[j]
        if env.sender in vs.skip_shares:
            return []
        if not self.public.share_validate(skip_payload(self.instance_id, j), env.sender, env.payload):
            return []
        vs.skip_shares[env.sender] = env.payload
        if len(vs.skip_shares) == self.quorum and not vs.skip_sent:
            vs.skip_sent = True
            sigma = self.public.threshold_sign(vs.skip_shares.values())
            return self._to_all(SKIP, j, sigma)
        return []

    def _on_skip(self, env: Envelope) -> list[Envelope]:
        j = env.view
        if j < self.view - 1:
            return []
        vs = self.views[j]
        if not self.public.threshold_validate(skip_payload(self.instance_id, j), env.payload):
            return []
        out = []
        if not vs.skip_sent:
            vs.skip_sent = True
            out += self._to_all(SKIP, j, env.payload)
        if j == self.view and not vs.skip:
            vs.skip = True
            out += self._enter_election(vs)
        return out

    # -- leader election and view change -------------------------------------------

    def _enter_election(self, vs: ViewState) -> list[Envelope]:
        for rec in vs.receivers.values():
            rec.abandon()
        vs.sender.halt()
        self.observer.on_elect_invoke(self.pid, vs.view)
        envs, leader = vs.election.invoke()
        out = self._stamp(envs, vs.view)
        if leader is not None:
            out += self._on_leader(vs, leader)
        return out

    def _on_coin_share(self, env: Envelope) -> list[Envelope]:
        j = env.view
        if j != self.view:
            return []
        vs = self.views[j]
        leader = vs.election.on_share(env.sender, env.payload)
        if leader is None:
            return []
        return self._on_leader(vs, leader)

    def _on_leader(self, vs: ViewState, leader: int) -> list[Envelope]:
        j = vs.view
        vs.leader = leader
        self.leaders[j] = leader
        self.observer.on_elect(self.pid, j, leader)
        d = vs.deliveries
        msg = ViewChangeMessage(d[KEY].get(leader), d[LOCK].get(leader), d[COMMIT].get(leader))
        out = self._to_all(VIEW_CHANGE, j, msg)
        pending, vs.vc_pending = vs.vc_pending, []
        for env in pending:
            out += self._process_view_change(env)
        return out

    def _on_view_change(self, env: Envelope) -> list[Envelope]:
        vs = self.views.get(env.view)
        if vs is None:
            return []
        if vs.leader is None:
            vs.vc_pending.append(env)
            return []
        return self._process_view_change(env)

    def _process_view_change(self, env: Envelope) -> list[Envelope]:
        j = env.view
        vs = self.views[j]
        if env.sender in vs.vc_from or not isinstance(env.payload, ViewChangeMessage):
            return []
        vs.vc_from.add(env.sender)
        self.on_view_change(j, env.payload)
        if j == self.view and not vs.finished and len(vs.vc_from) >= self.quorum:
            return self._finish_view(vs)
        return []

    def on_view_change(self, j: int, msg: ViewChangeMessage) -> None:
        """Apply one view-change report: decide on commit, raise LOCK, raise KEY."""
        base = (self.instance_id, self.leaders[j], j)
        validate = self.public.threshold_validate
        if _pair(msg.commit_slot):
            v4, s4 = msg.commit_slot
            if validate(stage_payload(base, 3, v4), s4):
                self.decide(v4, j)
        if _pair(msg.lock_slot) and j > self.lock:
            v3, s3 = msg.lock_slot
            if validate(stage_payload(base, 2, v3), s3):
                self.lock = j
        if _pair(msg.key_slot):
            v2, s2 = msg.key_slot
            if j >= self.key.view and validate(stage_payload(base, 1, v2), s2):
                if j > self.key.view:
                    self.key = KeyRecord(j, v2, s2)
                elif v2 != self.key.value:
                    self.anomalies.append(f"two valid keys for view {j}: {self.key.value!r} vs {v2!r}")

    def decide(self, value, view: int) -> None:
        if self.decided_view is not None:
            if value != self.decided:
                self.anomalies.append(f"decided {self.decided!r} then saw commit for {value!r}")
            return
        self.decided = value
        self.decided_view = view
        self.observer.on_decide(self.pid, view, value)

    # -- parsing -------------------------------------------------------------------

    def _parse_instance(self, env: Envelope):
        inst = env.instance
        try:
            (iid, k, j), stage = inst
        except (TypeError, ValueError):
            return None
        if iid != self.instance_id or j != env.view:
            return None
        if not isinstance(k, int) or not 0 <= k < self.n:
            return None
        if not isinstance(stage, int) or not 1 <= stage <= STAGES:
            return None
        return k, j, stage

    _handlers = {
        SEND: _on_send,
        ACK: _on_ack,
        DONE: _on_done,
        SKIP_SHARE: _on_skip_share,
        SKIP: _on_skip,
        COIN_SHARE: _on_coin_share,
        VIEW_CHANGE: _on_view_change,
    }
