"""Two-party private set intersection over user vertices.

The commutative mode is the classic Diffie-Hellman construction: both
parties hash their elements into a group, blind them with a secret scalar,
swap, blind the peer's values again and compare the doubly-blinded sets.
Only set sizes and blinded group elements appear on the wire.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, Protocol

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey

from .graph import Kind, VertexId

DOMAIN = b"dpfedrec/psi/v1"


class PsiError(ValueError):
    pass


class ItemVertexInSet(PsiError):
    pass


class ProtocolAbort(PsiError):
    pass


class PsiMode(str, enum.Enum):
    ORACLE = "oracle"
    COMMUTATIVE = "commutative"


def _vertex_bytes(v: VertexId) -> bytes:
    return DOMAIN + struct.pack(">BQ", int(v.kind), v.index)


def _derive(seed: int, role: bytes, n_bytes: int) -> bytes:
    out = b""
    counter = 0
    while len(out) < n_bytes:
        out += hashlib.sha256(DOMAIN + role + struct.pack(">QI", seed % 2**64, counter)).digest()
        counter += 1
    return out[:n_bytes]


class CommutativeGroup(Protocol):
    name: str
    element_size: int

    def hash_to_element(self, v: VertexId) -> bytes: ...

    def secret(self, seed: int, role: bytes) -> object: ...

    def blind(self, element: bytes, secret: object) -> bytes: ...


class Curve25519Group:
    """x-only scalar multiplication on Curve25519 (RFC 7748 X25519).

    Scalar multiplication commutes, and the x-coordinate of [a][b]P does not
    depend on the sign of P, so X25519 with two fixed secrets is a
    commutative blinding function on 32-byte strings.
    """

    name = "x25519"
    element_size = 32

    def hash_to_element(self, v: VertexId) -> bytes:
        return hashlib.sha256(_vertex_bytes(v)).digest()

    def secret(self, seed: int, role: bytes) -> X25519PrivateKey:
        return X25519PrivateKey.from_private_bytes(_derive(seed, b"x25519" + role, 32))

    def blind(self, element: bytes, secret: X25519PrivateKey) -> bytes:
        try:
            return secret.exchange(X25519PublicKey.from_public_bytes(element))
        except ValueError as exc:
            # all-zero output: the element was a low-order point
            raise ProtocolAbort(f"degenerate group element: {exc}") from None


# RFC 3526 group 14: p = 2^2048 - 2^1984 - 1 + 2^64 * (floor(2^1918 * pi) + 124476)
MODP_2048_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)


class Modp2048Group:
    """Quadratic residues modulo the 2048-bit safe prime of RFC 3526.

    Elements are hashed to the prime-order subgroup by hashing and then
    squaring. Exponents are drawn from ``exponent_bits`` random bits, which
    keeps blinding affordable in pure Python.
    """

    name = "modp2048"
    element_size = 256

    def __init__(self, exponent_bits: int = 256):
        self.p = MODP_2048_P
        self.q = (MODP_2048_P - 1) // 2
        self.exponent_bits = exponent_bits

    def hash_to_element(self, v: VertexId) -> bytes:
        x = int.from_bytes(_derive(0, b"h2g" + _vertex_bytes(v), self.element_size + 16), "big")
        return pow(x % self.p, 2, self.p).to_bytes(self.element_size, "big")

    def secret(self, seed: int, role: bytes) -> int:
        raw = int.from_bytes(_derive(seed, b"modp" + role, (self.exponent_bits + 7) // 8), "big")
        return raw % (self.q - 1) + 1

    def blind(self, element: bytes, secret: int) -> bytes:
        x = int.from_bytes(element, "big")
        if not 1 < x < self.p - 1:
            raise ProtocolAbort("element outside the group")
        return pow(x, secret, self.p).to_bytes(self.element_size, "big")


DEFAULT_GROUP = Curve25519Group()


def encode_elements(elements: Iterable[bytes], width: int) -> bytes:
    elements = list(elements)
    for e in elements:
        if len(e) != width:
            raise ValueError(f"element of {len(e)} bytes, expected {width}")
    return struct.pack(">I", len(elements)) + b"".join(elements)


def decode_elements(blob: bytes, width: int) -> list[bytes]:
    if len(blob) < 4:
        raise ProtocolAbort("truncated message header")
    (count,) = struct.unpack_from(">I", blob)
    if len(blob) != 4 + count * width:
        raise ProtocolAbort(f"message of {len(blob)} bytes does not hold {count} elements of {width} bytes")
    return [blob[4 + i * width : 4 + (i + 1) * width] for i in range(count)]


@dataclass
class PsiSession:
    initiator: int
    responder: int
    transcript: list[bytes] = field(default_factory=list)
    result: frozenset[VertexId] = frozenset()

    def transcript_bytes(self) -> int:
        return sum(len(b) for b in self.transcript)


class _Channel(Protocol):
    def send(self, sender: int, recipient: int, blob: bytes) -> None: ...

    def recv(self, recipient: int, sender: int) -> bytes: ...


def _check_users(s: Iterable[VertexId]) -> frozenset[VertexId]:
    s = frozenset(s)
    for v in s:
        if v.kind != Kind.USER:
            raise ItemVertexInSet(f"{v!r} is an item; only users may enter PSI")
    return s


def psi_intersect(
    set_a: Iterable[VertexId],
    set_b: Iterable[VertexId],
    mode: PsiMode | str = PsiMode.COMMUTATIVE,
    session_seed: int = 0,
    group: CommutativeGroup | None = None,
    bus: _Channel | None = None,
    parties: tuple[int, int] = (0, 1),
) -> tuple[frozenset[VertexId], PsiSession]:
    """Intersect two user sets; both parties learn the same result.

    With a ``bus`` every protocol message is routed through it between
    ``parties``; otherwise messages are passed directly.
    """
    a, b = _check_users(set_a), _check_users(set_b)
    mode = PsiMode(mode)
    session = PsiSession(*parties)
    if mode is PsiMode.ORACLE:
        session.result = a & b
        return session.result, session

    group = group or DEFAULT_GROUP
    width = group.element_size
    id_a, id_b = parties

    def exchange(sender: int, recipient: int, blob: bytes) -> bytes:
        session.transcript.append(blob)
        if bus is None:
            return blob
        bus.send(sender, recipient, blob)
        return bus.recv(recipient, sender)

    key_a = group.secret(session_seed, b"A")
    key_b = group.secret(session_seed, b"B")

    # round 1: each side sends its singly-blinded elements, sorted to hide input order
    blinded_a = {group.blind(group.hash_to_element(v), key_a): v for v in sorted(a)}
    blinded_b = {group.blind(group.hash_to_element(v), key_b): v for v in sorted(b)}
    order_a = sorted(blinded_a)
    order_b = sorted(blinded_b)
    got_by_b = decode_elements(exchange(id_a, id_b, encode_elements(order_a, width)), width)
    got_by_a = decode_elements(exchange(id_b, id_a, encode_elements(order_b, width)), width)

    # round 2: blind the peer's values again and return them in received order
    double_for_b = [group.blind(x, key_a) for x in got_by_a]
    double_for_a = [group.blind(x, key_b) for x in got_by_b]
    back_to_b = decode_elements(exchange(id_a, id_b, encode_elements(double_for_b, width)), width)
    back_to_a = decode_elements(exchange(id_b, id_a, encode_elements(double_for_a, width)), width)
    if len(back_to_a) != len(order_a) or len(back_to_b) != len(order_b):
        raise ProtocolAbort("peer returned the wrong number of elements")

    # A: own elements doubly blinded by B, compared with B's elements blinded by A
    theirs = set(double_for_b)
    result_a = frozenset(blinded_a[s] for s, d in zip(order_a, back_to_a) if d in theirs)
    mine = set(double_for_a)
    result_b = frozenset(blinded_b[s] for s, d in zip(order_b, back_to_b) if d in mine)
    if result_a != result_b:
        raise ProtocolAbort("parties disagree on the intersection")
    session.result = result_a
    return result_a, session
