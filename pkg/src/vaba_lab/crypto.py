"""Dealer-based, test-grade threshold signatures and threshold coin.

Shares are HMAC-SHA256 tags under per-party keys derived by a trusted
dealer.  A :class:`ThresholdSignature` carries the shares it was built
from and validation re-checks every one of them, so a signature is valid
exactly when it contains ``2f+1`` distinct valid shares on the message.

The coin is ``G(s) = HMAC(coin_master, s) mod n``.  The coin master key
lives only inside :class:`PublicKeys` and is evaluated only after
``f+1`` valid coin shares are presented, which is how "infeasible to
predict" is modelled here: structurally impossible rather than
computationally hard.

Party key material is handed out through :class:`PartyKeys`, which
exposes ``share_sign``/``coin_share`` for one party only.  Components
that are not given a party's :class:`PartyKeys` cannot produce valid
shares for it.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass
from typing import ClassVar, Iterable

from vaba_lab.encoding import digest, encode


class InsufficientShares(ValueError):
    """Raised by :meth:`PublicKeys.coin_toss` with fewer than f+1 valid shares."""


@dataclass(frozen=True)
class SignatureShare:
    signer: int
    message_digest: bytes
    tag: bytes


@dataclass(frozen=True)
class ThresholdSignature:
    message_digest: bytes
    shares: frozenset
    word_size: ClassVar[int] = 1


@dataclass(frozen=True)
class CoinShare:
    signer: int
    coin_name: bytes
    tag: bytes


def _mac(key: bytes, data: bytes) -> bytes:
    return hmac.new(key, data, hashlib.sha256).digest()


def _derive(master: bytes, *label) -> bytes:
    return _mac(master, encode(label))


class PublicKeys:
    """Public verification functions shared by every party.

    Holds the verification oracle's keys privately; nothing here lets a
    caller produce a share for somebody else.
    """

    def __init__(self, n: int, f: int, sign_keys, coin_keys, coin_master: bytes):
        self.n = n
        self.f = f
        self.sig_threshold = 2 * f + 1
        self.coin_threshold = f + 1
        self._sign_keys = tuple(sign_keys)
        self._coin_keys = tuple(coin_keys)
        self.__coin_master = coin_master
        self._share_cache: dict = {}
        self._sig_cache: dict = {}

    # -- signatures -----------------------------------------------------

    def _expected_tag(self, party: int, msg_digest: bytes) -> bytes:
        key = (party, msg_digest)
        tag = self._share_cache.get(key)
        if tag is None:
            tag = _mac(self._sign_keys[party], msg_digest)
            self._share_cache[key] = tag
        return tag

    def _share_ok(self, msg_digest: bytes, party, share) -> bool:
        if not isinstance(share, SignatureShare):
            return False
        if not isinstance(party, int) or not 0 <= party < self.n:
            return False
        if share.signer != party or share.message_digest != msg_digest:
            return False
        return hmac.compare_digest(share.tag, self._expected_tag(party, msg_digest))

    def share_validate(self, message, party: int, share) -> bool:
        try:
            d = digest(message)
        except TypeError:
            return False
        return self._share_ok(d, party, share)

    def threshold_sign(self, shares: Iterable[SignatureShare]) -> ThresholdSignature:
        shares = frozenset(shares)
        digests = {s.message_digest for s in shares}
        if len(digests) != 1:
            raise ValueError("threshold_sign needs shares on exactly one message")
        return ThresholdSignature(digests.pop(), shares)

    def threshold_validate(self, message, sig) -> bool:
        if not isinstance(sig, ThresholdSignature):
            return False
        try:
            d = digest(message)
        except TypeError:
            return False
        if sig.message_digest != d:
            return False
        key = (d, sig)
        ok = self._sig_cache.get(key)
        if ok is None:
            signers = {s.signer for s in sig.shares if self._share_ok(d, s.signer, s)}
            ok = len(signers) >= self.sig_threshold
            self._sig_cache[key] = ok
        return ok

    # -- coin -------------------------------------------------------------

    def coin_share_validate(self, s, party: int, share) -> bool:
        if not isinstance(share, CoinShare):
            return False
        if not isinstance(party, int) or not 0 <= party < self.n:
            return False
        try:
            name = digest(s)
        except TypeError:
            return False
        if share.signer != party or share.coin_name != name:
            return False
        return hmac.compare_digest(share.tag, _mac(self._coin_keys[party], name))

    def coin_toss(self, s, shares: Iterable[CoinShare]) -> int:
        # extras and invalid shares are ignored; only the count of valid
        # distinct signers matters
        signers = {
            sh.signer for sh in shares
            if isinstance(sh, CoinShare) and self.coin_share_validate(s, sh.signer, sh)
        }
        if len(signers) < self.coin_threshold:
            raise InsufficientShares(
                f"coin_toss needs {self.coin_threshold} valid shares, got {len(signers)}"
            )
        out = _mac(self.__coin_master, digest(s))
        return int.from_bytes(out[:8], "big") % self.n


class PartyKeys:
    """Private signing and coin-share capability of a single party."""

    def __init__(self, party: int, sign_key: bytes, coin_key: bytes, public: PublicKeys):
        self.party = party
        self.public = public
        self.__sign_key = sign_key
        self.__coin_key = coin_key

    def share_sign(self, message) -> SignatureShare:
        d = digest(message)
        return SignatureShare(self.party, d, _mac(self.__sign_key, d))

    def coin_share(self, s) -> CoinShare:
        name = digest(s)
        return CoinShare(self.party, name, _mac(self.__coin_key, name))


class Dealer:
    """Trusted dealer: derives every party's keys from a single seed."""

    def __init__(self, n: int, f: int, seed: int):
        if n < 1 or f < 0 or n < 3 * f + 1:
            raise ValueError(f"need n >= 3f+1 and n >= 1, got n={n}, f={f}")
        self.n = n
        self.f = f
        self.seed = seed
        master = hashlib.sha256(encode(("vaba-lab dealer", seed))).digest()
        self._master = master
        self._sign_keys = [_derive(master, "sign", i) for i in range(n)]
        self._coin_keys = [_derive(master, "coin", i) for i in range(n)]
        self._input_key = _derive(master, "input-tag")
        self.public = PublicKeys(
            n, f, self._sign_keys, self._coin_keys, _derive(master, "coin-master")
        )

    @classmethod
    def setup(cls, n: int, f: int, seed: int) -> "Dealer":
        return cls(n, f, seed)

    @property
    def sig_threshold(self) -> int:
        return 2 * self.f + 1

    @property
    def coin_threshold(self) -> int:
        return self.f + 1

    def party(self, i: int) -> PartyKeys:
        return PartyKeys(i, self._sign_keys[i], self._coin_keys[i], self.public)

    def tag_input(self, payload) -> bytes:
        """Dealer-issued authenticator used by the ``signed`` app validator."""
        return _mac(self._input_key, encode(payload))

    def check_input_tag(self, payload, tag) -> bool:
        try:
            expected = self.tag_input(payload)
        except TypeError:
            return False
        return isinstance(tag, bytes) and hmac.compare_digest(tag, expected)

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "f": self.f,
            "seed": self.seed,
            "parties": [
                {"id": i, "sign_key": self._sign_keys[i].hex(), "coin_key": self._coin_keys[i].hex()}
                for i in range(self.n)
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Dealer":
        doc = json.loads(text)
        dealer = cls(doc["n"], doc["f"], doc["seed"])
        for entry in doc["parties"]:
            i = entry["id"]
            if (
                bytes.fromhex(entry["sign_key"]) != dealer._sign_keys[i]
                or bytes.fromhex(entry["coin_key"]) != dealer._coin_keys[i]
            ):
                raise ValueError(f"key material for party {i} does not match the seed")
        return dealer
