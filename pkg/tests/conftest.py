import random

import pytest

from vaba_lab.crypto import Dealer
from vaba_lab.engine import Party


@pytest.fixture
def dealer4():
    return Dealer.setup(4, 1, seed=7)


def deliver_all(parties, envelopes, rng=None, limit=200_000):
    """Deliver every pending envelope (random order if ``rng``), returning the delivery count."""
    pending = list(envelopes)
    steps = 0
    while pending and steps < limit:
        i = rng.randrange(len(pending)) if rng else 0
        env = pending.pop(i)
        steps += 1
        pending += parties[env.dest].handle(env)
    return steps


def honest_cluster(n=4, f=1, seed=0, validator=lambda v: True, inputs=None):
    dealer = Dealer.setup(n, f, seed)
    inputs = inputs or [i + 1 for i in range(n)]
    parties = [Party(i, dealer.party(i), inputs[i], validator) for i in range(n)]
    return dealer, parties


def run_cluster(parties, seed=0):
    """Start every party and deliver in random order until all decide or the network drains."""
    rng = random.Random(seed)
    pending = []
    for p in parties:
        pending += p.start()
    while pending and not all(p.decided_view is not None for p in parties):
        env = pending.pop(rng.randrange(len(pending)))
        pending += parties[env.dest].handle(env)
    return parties
