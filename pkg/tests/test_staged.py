import itertools

from vaba_lab.broadcast import PbMessage
from vaba_lab.encoding import digest
from vaba_lab.messages import ACK, SEND
from vaba_lab.staged import (
    COMMIT,
    KEY,
    LOCK,
    StagedReceiver,
    StagedSender,
    stage_payload,
    staged_on_delivery,
    staged_validator,
)

BASE = (b"vaba", 0, 1)


def accept_all(base, value, sigma_ex):
    return True


def run_staged(dealer, value="v", abandon_at=None):
    """Fault-free staged broadcast; returns (proof, deliveries, envelope count, receivers)."""
    sender = StagedSender(BASE, 0, dealer.public, value, "ex")
    recs = [StagedReceiver(BASE, 0, dealer.party(i), accept_all) for i in range(dealer.n)]
    pending = sender.start()
    deliveries, count, proof = [], 0, None
    while pending:
        env = pending.pop(0)
        count += 1
        stage = env.instance[1]
        if env.kind == SEND:
            if abandon_at and abandon_at[0] == env.dest and stage > abandon_at[1]:
                recs[env.dest].abandon()
            d, ack, _ = recs[env.dest].on_send(stage, env.sender, env.payload)
            if d:
                deliveries.append((env.dest, d))
            if ack:
                pending.append(ack)
        else:
            more, done = sender.on_ack(stage, env.sender, env.payload)
            pending += more
            proof = done or proof
    return proof, deliveries, count, recs


def test_completion_proof_validates_stage_four(dealer4):
    proof, deliveries, _count, _ = run_staged(dealer4)
    assert dealer4.public.threshold_validate(stage_payload(BASE, 4, "v"), proof)
    kinds = {(p, d.kind) for p, d in deliveries}
    assert kinds == {(p, k) for p in range(4) for k in (KEY, LOCK, COMMIT)}


def test_message_count_at_most_8n(dealer4):
    _proof, _d, count, _ = run_staged(dealer4)
    assert count <= 8 * dealer4.n


def test_abandon_after_stage_two_stops_later_acks(dealer4):
    proof, deliveries, _count, recs = run_staged(dealer4, abandon_at=(3, 2))
    assert recs[3].stopped
    assert {d.kind for p, d in deliveries if p == 3} == {KEY}
    assert proof is not None  # three other parties still suffice


def test_abandon_before_start_suppresses_everything(dealer4):
    rec = StagedReceiver(BASE, 0, dealer4.party(1), accept_all)
    rec.abandon()
    rec.abandon()
    sender = StagedSender(BASE, 0, dealer4.public, "v", "ex")
    env = sender.start()[1]
    assert rec.on_send(1, 0, env.payload) == (None, None, False)


def stage_sig(dealer, stage, value, signers=(0, 1, 2)):
    payload = stage_payload(BASE, stage, value)
    return dealer.public.threshold_sign(dealer.party(i).share_sign(payload) for i in signers)


def test_validator_stage_one_defers_to_external(dealer4):
    msg = PbMessage("v", ("ex", None))
    assert staged_validator(dealer4.public, BASE, 1, msg, accept_all)
    assert not staged_validator(dealer4.public, BASE, 1, msg, lambda *a: False)


def test_validator_chaining(dealer4):
    good = PbMessage("v", ("ex", stage_sig(dealer4, 2, "v")))
    wrong_stage = PbMessage("v", ("ex", stage_sig(dealer4, 1, "v")))
    assert staged_validator(dealer4.public, BASE, 3, good, accept_all)
    assert not staged_validator(dealer4.public, BASE, 3, wrong_stage, accept_all)
    # oracle: the two signed tuples really are different byte strings
    assert digest(stage_payload(BASE, 1, "v")) != digest(stage_payload(BASE, 3 - 1, "v"))


def test_on_delivery_mapping(dealer4):
    s1 = stage_sig(dealer4, 1, "v")
    s3 = stage_sig(dealer4, 3, "v")
    assert staged_on_delivery(BASE, 1, PbMessage("v", ("ex", None))) is None
    key = staged_on_delivery(BASE, 2, PbMessage("v", ("ex", s1)))
    assert (key.kind, key.value, key.proof) == (KEY, "v", s1)
    commit = staged_on_delivery(BASE, 4, PbMessage("v", ("ex", s3)))
    assert commit.kind == COMMIT
    assert dealer4.public.threshold_validate(stage_payload(BASE, 3, "v"), commit.proof)


def test_cross_stage_agreement_under_equivocation(dealer4):
    """An equivocating sender feeds v to some parties and w to others at stage 1.

    Enumerating every split of the three honest receivers (the sender is the
    corrupted party and signs both), no two valid signatures from stages 2..4
    ever name different values.
    """
    pub = dealer4.public
    honest = [1, 2, 3]
    for split in itertools.product("vw", repeat=3):
        recs = {i: StagedReceiver(BASE, 0, dealer4.party(i), accept_all) for i in honest}
        shares = {1: {v: {0: dealer4.party(0).share_sign(stage_payload(BASE, 1, v))} for v in "vw"}}
        for i, v in zip(honest, split):
            _d, ack, _ = recs[i].on_send(1, 0, PbMessage(v, ("ex", None)))
            shares[1][v][i] = ack.payload
        sigs = {}
        for stage in range(1, 5):
            for v in "vw":
                got = shares.get(stage, {}).get(v, {})
                if len(got) < 3:
                    continue
                sigs[(stage, v)] = pub.threshold_sign(got.values())
                # climb the next stage with the fresh proof
                nxt = shares.setdefault(stage + 1, {}).setdefault(v, {})
                nxt[0] = dealer4.party(0).share_sign(stage_payload(BASE, stage + 1, v))
                for i in honest:
                    _d, ack, _ = recs[i].on_send(stage + 1, 0, PbMessage(v, ("ex", sigs[(stage, v)])))
                    if ack:
                        nxt[i] = ack.payload
        values = {v for (stage, v) in sigs if stage >= 2}
        assert len(values) <= 1, split
        assert len({v for (_stage, v) in sigs}) <= 1, split
