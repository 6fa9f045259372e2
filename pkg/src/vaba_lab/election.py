"""Threshold-coin leader election for one election id ``<id, j>``."""

from __future__ import annotations

from typing import Optional

from vaba_lab.crypto import CoinShare, PartyKeys
from vaba_lab.messages import COIN_SHARE, Envelope


class ElectionState:
    """Collects coin shares; resolves once invoked and f+1 valid shares are in."""

    def __init__(self, election_id, keys: PartyKeys):
        self.election_id = election_id
        self.keys = keys
        self.public = keys.public
        self.shares: dict[int, CoinShare] = {}
        self.invoked = False
        self.result: Optional[int] = None

    def invoke(self) -> tuple[list[Envelope], Optional[int]]:
        """Start the election: share to every other party, own share kept locally."""
        if self.invoked:
            raise RuntimeError(f"elect({self.election_id!r}) invoked twice")
        self.invoked = True
        me = self.keys.party
        share = self.keys.coin_share(self.election_id)
        out = [
            Envelope(COIN_SHARE, me, k, share, self.election_id)
            for k in range(self.public.n) if k != me
        ]
        return out, self.on_share(me, share)

    def on_share(self, sender: int, share) -> Optional[int]:
        if sender in self.shares:
            return None
        if not self.public.coin_share_validate(self.election_id, sender, share):
            return None
        self.shares[sender] = share
        return self._maybe_resolve()

    def _maybe_resolve(self) -> Optional[int]:
        if not self.invoked or self.result is not None:
            return None
        if len(self.shares) < self.public.coin_threshold:
            return None
        self.result = self.public.coin_toss(self.election_id, self.shares.values())
        return self.result
