"""f+1-provable broadcast.

A sender disseminates ``<v, proof>``; every party that accepts it signs
``<id, v>`` and acks back.  ``2f+1`` acks combine into a threshold
signature proving that ``f+1`` honest parties delivered ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

from vaba_lab.crypto import PartyKeys, PublicKeys, SignatureShare, ThresholdSignature
from vaba_lab.messages import ACK, SEND, Envelope

Validator = Callable[[Any, "PbMessage"], bool]


@dataclass(frozen=True)
class PbMessage:
    value: Any
    proof: Any = None


def signed_payload(instance, value) -> tuple:
    """The tuple ``<id, v>`` that receivers share-sign."""
    return (instance, value)


class PbSender:
    """Sender side of one provable-broadcast instance."""

    def __init__(self, instance, me: int, public: PublicKeys):
        self.instance = instance
        self.me = me
        self.public = public
        self.message: Optional[PbMessage] = None
        self.shares: dict[int, SignatureShare] = {}
        self.completed = False
        self.proof: Optional[ThresholdSignature] = None

    def broadcast(self, message: PbMessage, recipients=None) -> list[Envelope]:
        if self.message is not None:
            raise RuntimeError(f"instance {self.instance!r} already started")
        self.message = message
        if recipients is None:
            recipients = range(self.public.n)
        return [Envelope(SEND, self.me, k, message, self.instance) for k in recipients]

    def on_ack(self, sender: int, share) -> Optional[ThresholdSignature]:
        """Collect an ack; returns the threshold signature the moment |S| hits 2f+1."""
        if self.message is None or self.completed or sender in self.shares:
            return None
        payload = signed_payload(self.instance, self.message.value)
        if not self.public.share_validate(payload, sender, share):
            return None
        self.shares[sender] = share
        if len(self.shares) == self.public.sig_threshold:
            self.completed = True
            self.proof = self.public.threshold_sign(self.shares.values())
            return self.proof
        return None


class PbReceiver:
    """Receiver side: deliver at most once, never after abandon."""

    def __init__(self, instance, designated_sender: int, keys: PartyKeys, validator: Validator):
        self.instance = instance
        self.designated_sender = designated_sender
        self.keys = keys
        self.validator = validator
        self.stop = False
        self.delivered: Optional[PbMessage] = None

    def on_send(self, sender: int, message) -> Optional[tuple[PbMessage, Envelope]]:
        if self.stop or sender != self.designated_sender:
            return None
        if not isinstance(message, PbMessage):
            return None
        try:
            ok = self.validator(self.instance, message)
        except Exception:
            ok = False
        if not ok:
            return None
        self.stop = True
        self.delivered = message
        share = self.keys.share_sign(signed_payload(self.instance, message.value))
        ack = Envelope(ACK, self.keys.party, self.designated_sender, share, self.instance)
        return message, ack

    def abandon(self) -> None:
        self.stop = True
