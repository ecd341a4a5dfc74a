import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpfedrec.bus import MessageBus, TaggedChannel
from dpfedrec.graph import item, user
from dpfedrec.psi import (
    Curve25519Group,
    ItemVertexInSet,
    Modp2048Group,
    ProtocolAbort,
    PsiMode,
    decode_elements,
    encode_elements,
    psi_intersect,
)

users = st.sets(st.integers(0, 300).map(user), max_size=60)


def test_identity():
    a = {user(i) for i in range(10)}
    got, _ = psi_intersect(a, a, PsiMode.COMMUTATIVE, session_seed=1)
    assert got == a


def test_disjoint():
    got, _ = psi_intersect({user(1)}, {user(2)}, "commutative", session_seed=1)
    assert got == frozenset()


def test_planted_overlap():
    rng = np.random.default_rng(0)
    ids = rng.permutation(10_000)[:363].tolist()
    common = {user(i) for i in ids[:37]}
    a = common | {user(i) for i in ids[37:200]}
    b = common | {user(i) for i in ids[200:363]}
    got, session = psi_intersect(a, b, PsiMode.COMMUTATIVE, session_seed=9)
    oracle, oracle_session = psi_intersect(a, b, PsiMode.ORACLE)
    assert got == oracle == common
    assert oracle_session.transcript == []
    assert len(session.transcript) == 4


def test_items_rejected():
    with pytest.raises(ItemVertexInSet):
        psi_intersect({user(1), item(1)}, {user(1)})


@given(users, users, st.integers(0, 2**63 - 1))
def test_mode_equivalence_and_commutativity(a, b, seed):
    got, _ = psi_intersect(a, b, PsiMode.COMMUTATIVE, session_seed=seed)
    assert got == a & b
    assert psi_intersect(b, a, PsiMode.COMMUTATIVE, session_seed=seed)[0] == got


def test_transcript_hides_raw_ids_and_sizes_only():
    a = {user(i) for i in range(5)}
    b = {user(i) for i in range(3, 10)}
    _, session = psi_intersect(a, b, session_seed=4)
    sizes = [int.from_bytes(blob[:4], "big") for blob in session.transcript]
    assert sizes == [5, 7, 7, 5]
    raw = [Curve25519Group().hash_to_element(v) for v in a | b]
    joined = b"".join(session.transcript)
    assert not any(h in joined for h in raw)


def test_transcript_independence_across_sessions():
    a = {user(i) for i in range(20)}
    b = {user(i) for i in range(10, 30)}
    _, s1 = psi_intersect(a, b, session_seed=1)
    _, s2 = psi_intersect(a, b, session_seed=2)
    width = 32
    e1 = {x for blob in s1.transcript for x in decode_elements(blob, width)}
    e2 = {x for blob in s2.transcript for x in decode_elements(blob, width)}
    assert not e1 & e2


def test_same_seed_same_transcript():
    a = {user(i) for i in range(8)}
    b = {user(i) for i in range(4, 12)}
    assert psi_intersect(a, b, session_seed=3)[1].transcript == psi_intersect(a, b, session_seed=3)[1].transcript


def test_modp_group_agrees_with_oracle():
    group = Modp2048Group(exponent_bits=128)
    a = {user(i) for i in range(12)}
    b = {user(i) for i in range(6, 15)}
    got, session = psi_intersect(a, b, session_seed=5, group=group)
    assert got == a & b
    assert all((len(blob) - 4) % 256 == 0 for blob in session.transcript)


def test_modp_blind_commutes():
    g = Modp2048Group(exponent_bits=64)
    x = g.hash_to_element(user(42))
    ka, kb = g.secret(1, b"A"), g.secret(1, b"B")
    assert g.blind(g.blind(x, ka), kb) == g.blind(g.blind(x, kb), ka)


def test_x25519_blind_commutes():
    g = Curve25519Group()
    x = g.hash_to_element(user(42))
    ka, kb = g.secret(7, b"A"), g.secret(7, b"B")
    assert g.blind(g.blind(x, ka), kb) == g.blind(g.blind(x, kb), ka)


def test_encode_decode_and_abort():
    blob = encode_elements([b"a" * 4, b"b" * 4], 4)
    assert decode_elements(blob, 4) == [b"aaaa", b"bbbb"]
    with pytest.raises(ProtocolAbort):
        decode_elements(blob[:-1], 4)
    with pytest.raises(ProtocolAbort):
        decode_elements(b"\x00", 4)
    with pytest.raises(ProtocolAbort):
        Modp2048Group().blind(b"\x00" * 256, 3)


def test_routes_over_bus():
    bus = MessageBus([3, 5])
    a = {user(i) for i in range(6)}
    b = {user(i) for i in range(4, 9)}
    got, session = psi_intersect(a, b, session_seed=2, bus=TaggedChannel(bus, "psi"), parties=(3, 5))
    assert got == a & b
    assert bus.total_bytes("psi") == session.transcript_bytes() + 4 * 4
    assert bus.bytes_by_channel[(3, 5)] > 0 and bus.bytes_by_channel[(5, 3)] > 0
