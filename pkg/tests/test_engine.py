import random

import pytest

from vaba_lab.crypto import Dealer
from vaba_lab.engine import KeyRecord, Party, ViewChangeMessage, key_payload, skip_payload
from vaba_lab.messages import DONE, SKIP, SKIP_SHARE, VIEW_CHANGE, Envelope
from vaba_lab.staged import STAGES, stage_payload
from vaba_lab.validators import even_integers

from conftest import honest_cluster, run_cluster

IID = b"vaba"


def tsig(dealer, payload, signers=(0, 1, 2)):
    return dealer.public.threshold_sign(dealer.party(i).share_sign(payload) for i in signers)


def party(dealer, pid=0, value=2, validator=even_integers):
    p = Party(pid, dealer.party(pid), value, validator, IID)
    p.start()
    return p


# -- ex_bc_validation ----------------------------------------------------------


def test_view_one_fresh_input_accepted(dealer4):
    p = party(dealer4)
    assert p.ex_bc_validation((IID, 1, 1), 4, (0, None))


def test_app_validator_rejects(dealer4):
    p = party(dealer4)
    assert not p.ex_bc_validation((IID, 1, 1), 3, (0, None))
    assert not p.ex_bc_validation((IID, 1, 1), 4, "garbage")


def test_key_below_lock_rejected(dealer4):
    p = party(dealer4)
    p.leaders.update({2: 1, 3: 2})
    p.lock = 3
    key2 = tsig(dealer4, key_payload(IID, 1, 2, 4))
    assert not p.ex_bc_validation((IID, 1, 4), 4, (2, key2))
    p.lock = 2
    assert p.ex_bc_validation((IID, 1, 4), 4, (2, key2))
    assert not p.ex_bc_validation((IID, 1, 4), 4, (0, None))


def test_key_must_be_stage_one_signature(dealer4):
    p = party(dealer4)
    p.leaders[2] = 1
    good = tsig(dealer4, stage_payload((IID, 1, 2), 1, 4))
    stage2 = tsig(dealer4, stage_payload((IID, 1, 2), 2, 4))
    assert p.ex_bc_validation((IID, 3, 3), 4, (2, good))
    assert not p.ex_bc_validation((IID, 3, 3), 4, (2, stage2))


def test_key_checked_against_its_own_views_leader(dealer4):
    p = party(dealer4)
    p.leaders.update({2: 1, 3: 0})
    key = tsig(dealer4, key_payload(IID, 1, 2, 4))
    assert p.ex_bc_validation((IID, 2, 3), 4, (2, key))
    p.leaders[2] = 3
    assert not p.ex_bc_validation((IID, 2, 3), 4, (2, key))


def test_key_for_unknown_view_rejected(dealer4):
    p = party(dealer4)
    key = tsig(dealer4, key_payload(IID, 1, 5, 4))
    assert not p.ex_bc_validation((IID, 2, 1), 4, (5, key))


def test_empty_key_must_carry_no_proof(dealer4):
    p = party(dealer4)
    assert not p.ex_bc_validation((IID, 2, 1), 4, (0, tsig(dealer4, b"x")))


# -- done / skip -------------------------------------------------------------------


def done_env(dealer, sender, dest=0, value=2, stage=STAGES, view=1):
    sigma = tsig(dealer, stage_payload((IID, sender, view), stage, value))
    return Envelope(DONE, sender, dest, (value, (0, None), sigma), None, view)


def test_third_done_emits_skip_share_once(dealer4):
    p = party(dealer4)
    assert p.handle(done_env(dealer4, 1)) == []
    assert p.handle(done_env(dealer4, 2)) == []
    out = p.handle(done_env(dealer4, 3))
    assert [e.kind for e in out] == [SKIP_SHARE] * 4
    assert dealer4.public.share_validate(skip_payload(IID, 1), 0, out[0].payload)
    assert p.handle(done_env(dealer4, 0)) == []


def test_done_with_stage_three_proof_dropped(dealer4):
    p = party(dealer4)
    p.handle(done_env(dealer4, 1, stage=3))
    assert p.views[1].done_count == 0


def test_duplicate_done_counted_once(dealer4):
    p = party(dealer4)
    p.handle(done_env(dealer4, 1))
    p.handle(done_env(dealer4, 1))
    assert p.views[1].done_count == 1


def test_skip_shares_combine_and_skip_echo_once(dealer4):
    p = party(dealer4)
    shares = [dealer4.party(i).share_sign(skip_payload(IID, 1)) for i in range(4)]
    out = []
    for i in range(3):
        out += p.handle(Envelope(SKIP_SHARE, i + 1, 0, shares[i + 1], None, 1))
    skips = [e for e in out if e.kind == SKIP]
    assert len(skips) == 4
    sigma = skips[0].payload
    # delivering the (own) skip enters the election but does not re-send skip
    more = p.handle(Envelope(SKIP, 1, 0, sigma, None, 1))
    assert p.views[1].skip
    assert not [e for e in more if e.kind == SKIP]
    assert p.handle(Envelope(SKIP, 2, 0, sigma, None, 1)) == []


def test_received_skip_is_echoed(dealer4):
    p = party(dealer4)
    sigma = tsig(dealer4, skip_payload(IID, 1), (1, 2, 3))
    out = p.handle(Envelope(SKIP, 1, 0, sigma, None, 1))
    assert len([e for e in out if e.kind == SKIP]) == 4
    assert all(rec.stopped for rec in p.views[1].receivers.values())


def test_forged_skip_ignored(dealer4):
    p = party(dealer4)
    bogus = tsig(dealer4, skip_payload(IID, 1), (1, 2))
    assert p.handle(Envelope(SKIP, 1, 0, bogus, None, 1)) == []
    wrong_view = tsig(dealer4, skip_payload(IID, 2))
    assert p.handle(Envelope(SKIP, 1, 0, wrong_view, None, 1)) == []
    assert not p.views[1].skip


def test_invalid_skip_shares_never_fire(dealer4):
    p = party(dealer4)
    for i in range(1, 4):
        share = dealer4.party(i).share_sign(("not-skip", 1))
        assert p.handle(Envelope(SKIP_SHARE, i, 0, share, None, 1)) == []
    assert not p.views[1].skip_shares


# -- view change ------------------------------------------------------------------


def leader_party(dealer, leader=1):
    p = party(dealer)
    p.views[1].leader = leader
    p.leaders[1] = leader
    return p


def slot(dealer, stage, value, leader=1, view=1):
    return (value, tsig(dealer, stage_payload((IID, leader, view), stage, value)))


def test_commit_slot_decides(dealer4):
    p = leader_party(dealer4)
    p.on_view_change(1, ViewChangeMessage(commit_slot=slot(dealer4, 3, 8)))
    assert (p.decided, p.decided_view) == (8, 1)


def test_lock_and_key_slots(dealer4):
    p = leader_party(dealer4)
    p.on_view_change(1, ViewChangeMessage(key_slot=slot(dealer4, 1, 8), lock_slot=slot(dealer4, 2, 8)))
    assert p.lock == 1
    assert p.key.view == 1 and p.key.value == 8
    assert p.decided_view is None


def test_slots_validated_independently(dealer4):
    p = leader_party(dealer4)
    bad_commit = slot(dealer4, 2, 8)  # stage-2 signature in the commit slot
    p.on_view_change(1, ViewChangeMessage(slot(dealer4, 1, 8), ("x", None), bad_commit))
    assert p.decided_view is None and p.lock == 0 and p.key.view == 1


def test_wrong_leader_slots_ignored(dealer4):
    p = leader_party(dealer4, leader=2)
    p.on_view_change(1, ViewChangeMessage(slot(dealer4, 1, 8), slot(dealer4, 2, 8), slot(dealer4, 3, 8)))
    assert (p.lock, p.key.view, p.decided_view) == (0, 0, None)


def test_view_change_barrier_moves_to_next_view(dealer4):
    p = leader_party(dealer4)
    for i in range(3):
        p.handle(Envelope(VIEW_CHANGE, i, 0, ViewChangeMessage(), None, 1))
    assert p.view == 2
    assert p.views[2].value == p.key.value


def test_view_change_before_leader_is_buffered(dealer4):
    p = party(dealer4)
    msg = ViewChangeMessage(commit_slot=slot(dealer4, 3, 8, leader=0))
    assert p.handle(Envelope(VIEW_CHANGE, 1, 0, msg, None, 1)) == []
    assert p.decided_view is None and p.views[1].vc_pending


def test_future_view_messages_buffered(dealer4):
    p = party(dealer4)
    p.handle(done_env(dealer4, 1, view=2))
    assert p.view == 1 and p._future[2]


def test_decision_is_final(dealer4):
    p = leader_party(dealer4)
    p.decide(8, 1)
    p.decide(10, 2)
    assert p.decided == 8 and p.anomalies


def test_start_twice_rejected(dealer4):
    p = party(dealer4)
    with pytest.raises(RuntimeError):
        p.start()


# -- whole-cluster behaviour ---------------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_fault_free_cluster_agrees(seed):
    _dealer, parties = honest_cluster(seed=seed, validator=even_integers, inputs=[2, 4, 6, 8])
    run_cluster(parties, seed)
    decided = {p.decided for p in parties}
    assert len(decided) == 1 and decided <= {2, 4, 6, 8}
    assert all(p.decided_view is not None for p in parties)


def test_decides_in_view_one_when_leader_completed():
    ones = 0
    for seed in range(50):
        _dealer, parties = honest_cluster(seed=seed)
        run_cluster(parties, seed)
        ones += all(p.decided_view == 1 for p in parties)
    assert ones >= 35


def test_party_without_own_completion_still_progresses():
    dealer = Dealer.setup(4, 1, 3)
    parties = [Party(i, dealer.party(i), i + 1, lambda v: True) for i in range(4)]
    rng = random.Random(3)
    pending = [e for p in parties for e in p.start()]
    # party 3's own broadcast never gets past stage 1
    pending = [e for e in pending if not (e.sender == 3 and e.kind == "send")]
    while pending and not all(p.decided_view for p in parties):
        env = pending.pop(rng.randrange(len(pending)))
        out = parties[env.dest].handle(env)
        pending += [e for e in out if not (e.sender == 3 and e.kind == "send" and e.view == 1)]
    assert parties[3].views[1].sender.completion_proof is None
    assert parties[3].views[1].skip
    assert all(p.decided_view is not None for p in parties)


def test_lock_and_key_monotone_over_many_views():
    for seed in range(10):
        dealer, parties = honest_cluster(seed=seed)
        rng = random.Random(seed)
        pending = [e for p in parties for e in p.start()]
        last = {p.pid: (0, 0) for p in parties}
        steps = 0
        while pending and steps < 20_000:
            env = pending.pop(rng.randrange(len(pending)))
            pending += parties[env.dest].handle(env)
            p = parties[env.dest]
            cur = (p.lock, p.key.view)
            assert cur[0] >= last[p.pid][0] and cur[1] >= last[p.pid][1]
            last[p.pid] = cur
            steps += 1
        assert max(p.view for p in parties) >= 2


def test_key_record_defaults():
    dealer = Dealer.setup(4, 1, 0)
    p = Party(0, dealer.party(0), 5, lambda v: True)
    assert p.key == KeyRecord(0, 5, None) and p.lock == 0
