import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import protocol_cases as pc
from sdpc import crypto, naming, protocol
from sdpc.protocol import RunState


@pytest.mark.parametrize("flow", sorted(pc.STEPS))
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_honest_runs_agree(flow, seed):
    w, rid = pc.honest_world(flow, seed)
    assert pc.agreement_errors(w, flow, rid) == []


@pytest.mark.parametrize("flow", sorted(pc.STEPS))
def test_every_mutation_is_rejected(flow):
    muts = pc.mutations(flow)
    assert {m.kind for m in muts} == {"flip", "drop", "sender", "stale", "substitute", "duplicate"}
    results = [pc.run_mutation(m) for m in muts]
    assert all(r.applied for r in results)
    assert [str(r.mutation) for r in results if not r.rejected] == []


def test_m1_forwarding():
    w = pc.World(3)
    msg = w.start("subp", "doc0/_v1/_s0")
    m2 = w.home.handle(msg)
    assert m2.step == "m2" and m2.receiver == "M"
    assert m2.fields["m1_name"] == msg.name
    assert m2.fields["enc_n0"] == msg.fields["enc_n0"]
    assert m2.fields["publisher"] == b"P0"
    # the publisher cannot read the sealed path
    name = naming.parse_name(msg.name)
    with pytest.raises(crypto.DecryptionError):
        naming.open_path(crypto.hash_bytes(w.home.public), name)
    # fresh n2 per run
    m2b = w.home.handle(w.start("subp", "doc0/_v1/_s0"))
    assert m2b.fields["n2"] != m2.fields["n2"]


def test_non_first_interest_is_ignored():
    w = pc.World(3)
    chain = w.home.objects["doc0/_v1"].chain
    msg = w.start("subp", "doc0/_v1/_s0")
    shared = naming.segment_name(w.home.prefix, chain.key_msg, chain, "doc0/_v1/_s0", 1).encode()
    assert w.home.handle(msg.copy(name=shared)) is None
    assert w.home.rejects == {"not-first-interest": 1}


def test_unregistered_digest_costs_one_lookup():
    w = pc.World(3)
    mallory = protocol.Consumer("mallory", b"\x11" * 32, random.Random(1))
    msg = mallory.start_subp("P0", w.home.prefix, w.home.public, "doc0/_v1/_s0")
    m2 = w.home.handle(msg)
    lookups, attempts = w.mgr.db.lookups, w.mgr.decrypt_attempts
    assert w.mgr.handle(m2) is None
    assert w.mgr.db.lookups - lookups == 1
    assert w.mgr.decrypt_attempts - attempts == 1
    assert w.mgr.rejects == {"unregistered": 1}


def test_ticket_opens_for_issuer_only():
    w, rid = pc.honest_world("subp", 4)
    ticket, k_s = w.alice.tickets["P0"]
    consumer_id, k, profile = crypto.unpack(crypto.open_sealed(w.home.keypair, ticket.sealed))
    assert (consumer_id, k, profile) == (b"alice", k_s, protocol.ACTIVE_PROFILE)
    with pytest.raises(crypto.DecryptionError):
        crypto.open_sealed(w.third.keypair, ticket.sealed)


def test_consumer_chain_matches_publisher():
    w, rid = pc.honest_world("subp", 5)
    grant = w.alice.grants[("P0", "doc1/_v1")]
    assert grant.chain.segment_keys == w.home.objects["doc1/_v1"].chain.segment_keys
    assert grant.key_msg == grant.chain.segment_keys[0]


def test_wrong_n2_response_aborts():
    w = pc.World(6)
    m2 = w.home.handle(w.start("subp", "doc0/_v1/_s0"))
    m2 = m2.copy(fields={**m2.fields, "n2": crypto.nonce_bytes(crypto.nonce_from_bytes(m2.fields["n2"]) + 1)})
    m3 = w.mgr.handle(m2)
    assert w.home.handle(m3) is None
    assert w.home.rejects == {"n2-mismatch": 1}
    assert w.home.runs[m2.run_id].state is RunState.ABORTED


@pytest.mark.parametrize("flow,final", [("subp", "m6"), ("apsub", "a3"), ("apsub3", "b5")])
def test_missing_final_response_marks_ticket_stolen(flow, final):
    w = pc.World(7)
    w.prepare(flow)
    w.mutator = lambda m: None if m.step == final else m
    rid = w.run(flow, pc.TARGET[flow], 2.0)
    pub = w.third if flow == "apsub3" else w.home
    deadline = pub.runs[rid].deadline
    assert pub.expire_run(rid, deadline - 0.1) is None
    report = pub.expire_run(rid, deadline)
    assert report is not None and report.step == "stolen"
    assert pub.runs[rid].state is RunState.STOLEN
    assert pub.runs[rid].data["ticket"] in pub.stolen
    w.mutator = None
    w.net.deliver(report, deadline)
    assert pub.runs[rid].data["ticket"] in w.mgr.stolen


def test_late_final_response_is_refused():
    w = pc.World(8)
    w.prepare("apsub")
    held = []
    w.mutator = lambda m: held.append(m) if m.step == "a3" else m
    rid = w.run("apsub", pc.TARGET["apsub"], 2.0)
    w.mutator = None
    w.net.deliver(held[0], 2.0 + w.home.ticket_deadline + 1)
    assert w.home.rejects.get("late") == 1
    assert w.home.runs[rid].state is not RunState.DONE


def test_stolen_ticket_refused_afterwards():
    w = pc.World(9)
    w.prepare("apsub")
    w.mutator = lambda m: None if m.step == "a3" else m
    rid = w.run("apsub", pc.TARGET["apsub"], 2.0)
    w.net.deliver(w.home.expire_run(rid, 100.0), 100.0)
    w.mutator = None
    for i, (flow, path) in enumerate([("apsub", "doc0/_v1/_s0"), ("apsub", "doc1/_v1/_s0"), ("apsub3", "doc2/_v1/_s0")]):
        rid = w.run(flow, path, 101.0 + i)
        assert not w.complete(flow, rid, path)
    assert w.home.rejects.get("stolen-ticket", 0) == 2
    assert w.mgr.rejects.get("ticket", 0) == 1


def test_stolen_notice_reaches_issuer():
    # the third party flags the ticket, the manager tells the home publisher
    w = pc.World(10)
    w.prepare("apsub3")
    w.mutator = lambda m: None if m.step == "b5" else m
    rid = w.run("apsub3", pc.TARGET["apsub3"], 2.0)
    w.mutator = None
    tdig = w.third.runs[rid].data["ticket"]
    w.net.deliver(w.third.expire_run(rid, 50.0), 50.0)
    assert tdig in w.home.stolen
    rid = w.run("apsub", "doc1/_v1/_s0", 51.0)
    assert not w.complete("apsub", rid, "doc1/_v1/_s0")


def test_apsub_ticket_identity_mismatch_is_ignored():
    w = pc.World(11)
    w.prepare("apsub")
    bob = protocol.Consumer("bob", b"\x22" * 32, random.Random(2))
    # bob holds alice's ticket and even her K_S; the claimed identity still differs
    bob.tickets["P0"] = w.alice.tickets["P0"]
    msg = bob.start_apsub("P0", w.home.prefix, w.home.public, "doc2/_v1/_s0")
    assert w.home.handle(msg) is None
    assert w.home.rejects == {"identity-mismatch": 1}
    # without K_S the access request does not even decrypt
    bob.tickets["P0"] = (w.alice.tickets["P0"][0], b"\x00" * 32)
    assert w.home.handle(bob.start_apsub("P0", w.home.prefix, w.home.public, "doc2/_v1/_s0")) is None
    assert w.home.rejects["access-decrypt"] == 1


def test_apsub_uses_three_messages_and_subp_six():
    for flow, n in (("subp", 6), ("apsub", 3), ("apsub3", 6)):
        w, rid = pc.honest_world(flow, 12)
        assert len([m for m in w.net.log if m.run_id == rid]) == n


def test_third_party_never_sees_key_msg():
    w, rid = pc.honest_world("apsub3", 13)
    chain = w.alice.grants[("P1", "doc1/_v1")].chain
    secrets = (chain.key_msg, chain.seed)
    for m in w.net.log:
        if "P1" in (m.sender, m.receiver):
            wire = m.wire()
            assert not any(s in wire for s in secrets)
    run = w.third.runs[rid]
    assert not any(v in secrets for v in run.data.values() if isinstance(v, bytes))
    with pytest.raises(crypto.DecryptionError):
        crypto.open_sealed(w.third.keypair, w.alice.tickets["P0"][0].sealed)


@pytest.mark.parametrize("flow,step,field,reply", [
    ("subp", "m3", "for_publisher", "m4"),
    ("apsub", "a1", "access", "a2"),
    ("apsub3", "b3", "for_publisher", "b4"),
])
def test_no_grant_without_authentication(flow, step, field, reply):
    w = pc.World(14)
    w.prepare(flow)
    pub = w.third if flow == "apsub3" else w.home
    sent = pub.grants_sent

    def corrupt(m):
        if m.step != step:
            return m
        blob = m.fields[field]
        return m.copy(fields={**m.fields, field: blob[:-1] + bytes([blob[-1] ^ 1])})

    w.mutator = corrupt
    rid = w.run(flow, pc.TARGET[flow], 2.0)
    assert reply not in [m.step for m in w.net.log if m.run_id == rid]
    assert pub.grants_sent == sent
    assert ("P1" if flow == "apsub3" else "P0", pc.TARGET[flow][:-4]) not in w.alice.grants


def test_publish_object_segments():
    rng = random.Random(15)
    pub = protocol.Publisher("P0", "p0/content", crypto.PublisherKeyPair.generate(rng), rng)
    chain, segments = protocol.publish_object(pub, "movie.mp4", 1, 10 * 1000, 1000)
    assert chain.length == 10 and len(segments) == 10
    assert len(set(chain.segment_keys[1:])) == 10
    po = pub.objects["movie.mp4/_v1"]
    for seg, (name, ct) in enumerate(segments, start=1):
        assert crypto.sym_decrypt(chain.segment_keys[seg], ct) == po.plaintext(seg)
        wrong = chain.segment_keys[seg + 1] if seg < 10 else chain.segment_keys[1]
        with pytest.raises(crypto.DecryptionError):
            crypto.sym_decrypt(wrong, ct)
        assert naming.parse_name(name).kind is naming.NameKind.SHARED_SEGMENT


def test_tampered_grant_breaks_every_segment():
    rng = random.Random(16)
    pub = protocol.Publisher("P0", "p0/content", crypto.PublisherKeyPair.generate(rng), rng)
    chain, segments = protocol.publish_object(pub, "movie.mp4", 1, 10 * 1000, 1000)
    bad_seed = bytes([chain.seed[0] ^ 1]) + chain.seed[1:]
    bad = crypto.build_chain(bad_seed, chain.length, pub.public)
    for seg, (_, ct) in enumerate(segments, start=1):
        with pytest.raises(crypto.DecryptionError):
            crypto.sym_decrypt(bad.segment_keys[seg], ct)


def test_transcript_csv():
    w, rid = pc.honest_world("apsub", 17)
    text = w.transcript.to_csv()
    lines = text.splitlines()
    assert lines[0] == ",".join(protocol.Transcript.FIELDS)
    assert any(rid in line and ",a3," in line and line.endswith(",accept") for line in lines)
