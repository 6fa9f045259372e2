"""Protocol envelopes exchanged through the simulated network."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

SEND = "send"
ACK = "ack"
DONE = "done"
SKIP_SHARE = "skip-share"
SKIP = "skip"
COIN_SHARE = "coin-share"
VIEW_CHANGE = "view-change"

KINDS = (SEND, ACK, DONE, SKIP_SHARE, SKIP, COIN_SHARE, VIEW_CHANGE)


@dataclass(frozen=True)
class Envelope:
    """One point-to-point message.  Every envelope is one word."""

    kind: str
    sender: int
    dest: int
    payload: Any = None
    instance: Any = None
    view: Optional[int] = None
    words: int = 1

    def to_dict(self) -> dict:
        return {
            "instance": _jsonable(self.instance),
            "kind": self.kind,
            "from": self.sender,
            "to": self.dest,
            "view": self.view,
            "words": self.words,
        }


def _jsonable(x):
    if isinstance(x, (tuple, list)):
        return [_jsonable(y) for y in x]
    if isinstance(x, bytes):
        return x.hex()
    return x
