"""Validated asynchronous Byzantine agreement with a deterministic simulation lab."""

from vaba_lab.crypto import (
    CoinShare,
    Dealer,
    InsufficientShares,
    PartyKeys,
    PublicKeys,
    SignatureShare,
    ThresholdSignature,
)
from vaba_lab.engine import KeyRecord, Party
from vaba_lab.messages import Envelope

__version__ = "0.1.0"

__all__ = [
    "CoinShare",
    "Dealer",
    "Envelope",
    "InsufficientShares",
    "KeyRecord",
    "Party",
    "PartyKeys",
    "PublicKeys",
    "SignatureShare",
    "ThresholdSignature",
]
