"""Pluggable external-validity predicates for agreement values.

``make_validator`` returns the predicate; ``make_value`` produces a value
that passes it, tagged with an integer label so runs can tell which
party proposed what.
"""

from __future__ import annotations

from typing import Any, Callable

from vaba_lab.crypto import Dealer

AppValidator = Callable[[Any], bool]

NAMES = ("always", "even", "signed")


def always_true(value) -> bool:
    return True


def even_integers(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value % 2 == 0


class SignedTag:
    """Accepts ``("tagged", payload, tag)`` where the tag was issued by the dealer."""

    def __init__(self, dealer: Dealer):
        self._dealer = dealer

    def __call__(self, value) -> bool:
        if not (isinstance(value, tuple) and len(value) == 3 and value[0] == "tagged"):
            return False
        return self._dealer.check_input_tag(value[1], value[2])


def make_validator(name: str, dealer: Dealer) -> AppValidator:
    if name in ("always", "always-true"):
        return always_true
    if name in ("even", "even-integers"):
        return even_integers
    if name in ("signed", "signed-tag"):
        return SignedTag(dealer)
    raise ValueError(f"unknown validator {name!r}; choose from {NAMES}")


def make_value(name: str, dealer: Dealer, label: int):
    """A value valid under validator ``name`` that encodes ``label``."""
    if name in ("always", "always-true"):
        return label
    if name in ("even", "even-integers"):
        return 2 * label
    if name in ("signed", "signed-tag"):
        return ("tagged", label, dealer.tag_input(label))
    raise ValueError(f"unknown validator {name!r}")


def make_invalid_value(name: str, label: int):
    """A value that fails validator ``name`` (``always`` accepts everything, so ``None``)."""
    if name in ("even", "even-integers"):
        return 2 * label + 1
    if name in ("signed", "signed-tag"):
        return ("tagged", label, b"\x00" * 32)
    return None
