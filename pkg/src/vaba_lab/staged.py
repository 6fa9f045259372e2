"""4-stage provable broadcast: four chained PB instances ``<id, 1..4>``.

Stage ``j > 1`` is only accepted with the stage ``j-1`` threshold
signature on the same value.  Receivers surface stage-2/3/4 deliveries
as KEY/LOCK/COMMIT events; the sender ends up holding the stage-4
signature, the completion-proof.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

from vaba_lab.broadcast import PbMessage, PbReceiver, PbSender, signed_payload
from vaba_lab.crypto import PartyKeys, PublicKeys, ThresholdSignature
from vaba_lab.messages import Envelope

STAGES = 4
KEY = "key"
LOCK = "lock"
COMMIT = "commit"
DELIVERY_KIND = {2: KEY, 3: LOCK, 4: COMMIT}

ExternalValidator = Callable[[Any, Any, Any], bool]  # (base_id, value, sigma_ex)


def stage_instance(base_id, stage: int) -> tuple:
    return (base_id, stage)


def stage_payload(base_id, stage: int, value) -> tuple:
    """What stage ``stage`` receivers sign: ``<<id, stage>, v>``."""
    return signed_payload(stage_instance(base_id, stage), value)


@dataclass(frozen=True)
class StageDelivery:
    kind: str
    instance: Any
    value: Any
    proof: Optional[ThresholdSignature]


def staged_validator(public: PublicKeys, base_id, stage: int, message,
                     external_validator: ExternalValidator) -> bool:
    if not isinstance(message, PbMessage):
        return False
    proof = message.proof
    if not (isinstance(proof, tuple) and len(proof) == 2):
        return False
    sigma_ex, sigma_in = proof
    if stage == 1:
        return bool(external_validator(base_id, message.value, sigma_ex))
    if 1 < stage <= STAGES:
        return public.threshold_validate(stage_payload(base_id, stage - 1, message.value), sigma_in)
    return False


def staged_on_delivery(base_id, stage: int, message: PbMessage) -> Optional[StageDelivery]:
    kind = DELIVERY_KIND.get(stage)
    if kind is None:
        return None
    return StageDelivery(kind, base_id, message.value, message.proof[1])


class StagedSender:
    """Drives ``<id,1>`` .. ``<id,4>`` in sequence, threading each stage's proof forward."""

    def __init__(self, base_id, me: int, public: PublicKeys, value, sigma_ex, recipients=None):
        self.base_id = base_id
        self.me = me
        self.public = public
        self.value = value
        self.sigma_ex = sigma_ex
        self.recipients = recipients
        self.stage = 0
        self.senders: dict[int, PbSender] = {}
        self.completion_proof: Optional[ThresholdSignature] = None
        self.halted = False

    def _start_stage(self, stage: int, sigma_in) -> list[Envelope]:
        self.stage = stage
        pb = PbSender(stage_instance(self.base_id, stage), self.me, self.public)
        self.senders[stage] = pb
        return pb.broadcast(PbMessage(self.value, (self.sigma_ex, sigma_in)), self.recipients)

    def start(self) -> list[Envelope]:
        if self.stage:
            raise RuntimeError(f"staged broadcast {self.base_id!r} already started")
        return self._start_stage(1, None)

    def on_ack(self, stage: int, sender: int, share) -> tuple[list[Envelope], Optional[ThresholdSignature]]:
        """Returns ``(next-stage envelopes, completion-proof or None)``."""
        pb = self.senders.get(stage)
        if pb is None or self.halted:
            return [], None
        sigma = pb.on_ack(sender, share)
        if sigma is None:
            return [], None
        if stage < STAGES:
            return self._start_stage(stage + 1, sigma), None
        self.completion_proof = sigma
        return [], sigma

    def halt(self) -> None:
        """Stop advancing to further stages (the owner no longer waits on us)."""
        self.halted = True


class StagedReceiver:
    def __init__(self, base_id, designated_sender: int, keys: PartyKeys,
                 external_validator: ExternalValidator):
        self.base_id = base_id
        self.receivers: dict[int, PbReceiver] = {}
        for stage in range(1, STAGES + 1):
            def validator(_instance, message, stage=stage):
                return staged_validator(keys.public, base_id, stage, message, external_validator)
            self.receivers[stage] = PbReceiver(
                stage_instance(base_id, stage), designated_sender, keys, validator
            )

    def on_send(self, stage: int, sender: int, message) -> tuple[Optional[StageDelivery], Optional[Envelope], bool]:
        """Returns ``(key/lock/commit event, ack, delivered-at-PB-level)``."""
        pb = self.receivers.get(stage)
        if pb is None:
            return None, None, False
        out = pb.on_send(sender, message)
        if out is None:
            return None, None, False
        delivered, ack = out
        return staged_on_delivery(self.base_id, stage, delivered), ack, True

    def abandon(self) -> None:
        for pb in self.receivers.values():
            pb.abandon()

    @property
    def stopped(self) -> bool:
        return all(pb.stop for pb in self.receivers.values())
