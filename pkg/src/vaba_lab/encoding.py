"""Canonical length-prefixed encoding for signed payloads.

Every payload that gets signed, share-signed or coin-tossed goes through
:func:`encode`, so the same logical tuple always produces the same bytes
no matter which module built it.

Supported atoms are ``bytes``, ``str``, ``int``, ``bool`` and ``None``;
tuples (and lists, which encode identically to tuples) nest arbitrarily.
"""

from __future__ import annotations

import hashlib

_LEN = 4


def _frame(tag: bytes, body: bytes) -> bytes:
    return tag + len(body).to_bytes(_LEN, "big") + body


def encode(obj) -> bytes:
    if obj is None:
        return _frame(b"N", b"")
    if isinstance(obj, bool):
        return _frame(b"b", b"\x01" if obj else b"\x00")
    if isinstance(obj, int):
        # signed, minimal-width two's complement
        width = (obj.bit_length() + 8) // 8
        return _frame(b"I", obj.to_bytes(width, "big", signed=True))
    if isinstance(obj, (bytes, bytearray)):
        return _frame(b"B", bytes(obj))
    if isinstance(obj, str):
        return _frame(b"S", obj.encode("utf-8"))
    if isinstance(obj, (tuple, list)):
        return _frame(b"T", b"".join(encode(x) for x in obj))
    raise TypeError(f"cannot canonically encode {type(obj).__name__}")


def digest(obj) -> bytes:
    """SHA-256 of the canonical encoding."""
    return hashlib.sha256(encode(obj)).digest()
