"""Hashed ElGamal with a multiplicatively split key and blind decryption.

Public key X = g^(x1*x2). A ciphertext is (K = g^t, c1 = E_k(m), c2 = H1(k, m))
with k = H2(X^t). To decrypt, the device sends B = K^(x1*rho), the server
answers Z = B^x2 and the device strips rho. The server sees one uniformly
random group element per decryption and nothing else.

The server only answers while it holds budget, which the support server
grants per authenticated request. That is the whole defence against a
device clone that never learned the PIN.
"""

from __future__ import annotations

import hmac
from dataclasses import dataclass, field

import gmpy2

from .crypto_suite import FULL, GROUP_2048, H1, H2, Rng, SchnorrGroup, Suite, sym_decrypt, sym_encrypt
from .wire import Bus, u32

TAG_BYTES = 32


class DecryptError(Exception):
    pass


class TagMismatch(DecryptError):
    pass


class ServerRefused(DecryptError):
    pass


@dataclass(frozen=True)
class PublicKey:
    group: SchnorrGroup = field(repr=False)
    X: int

    def to_bytes(self) -> bytes:
        return self.group.encode(self.X)


@dataclass
class DecClient:
    uid: str
    x1: int = field(repr=False)
    pk: PublicKey


@dataclass
class DecServer:
    uid: str
    x2: int = field(repr=False)
    pk: PublicKey
    budget: int = 0
    served: int = 0

    def allow(self, k: int) -> None:
        self.budget = k

    def close(self) -> None:
        self.budget = 0


@dataclass(frozen=True)
class Ciphertext:
    kem: bytes
    c1: bytes
    c2: bytes

    def to_bytes(self) -> bytes:
        return self.kem + self.c2 + self.c1

    def wire(self) -> bytes:
        raw = self.to_bytes()
        return u32(len(raw)) + raw

    @classmethod
    def from_bytes(cls, raw: bytes, group: SchnorrGroup = GROUP_2048,
                   tag_len: int = TAG_BYTES) -> "Ciphertext":
        e = group.element_bytes
        if len(raw) < e + tag_len:
            raise ValueError("short ciphertext")
        return cls(raw[:e], raw[e + tag_len:], raw[e:e + tag_len])


@dataclass(frozen=True)
class Opening:
    m: bytes
    k: bytes


def ciphertext_overhead(group: SchnorrGroup = GROUP_2048, tag_len: int = TAG_BYTES) -> int:
    """Bytes a standalone ciphertext adds on top of the plaintext."""
    return group.element_bytes + tag_len


def message_bytes_dec(group: SchnorrGroup = GROUP_2048) -> int:
    """Traffic of one blind decryption: one element each way."""
    return 2 * group.element_bytes


def keygen(uid: str, rng: Rng, suite: Suite = FULL) -> tuple[DecClient, DecServer]:
    grp = suite.group
    x1 = grp.random_scalar(rng)
    x2 = grp.random_scalar(rng)
    pk = PublicKey(grp, grp.exp(grp.g, x1 * x2 % grp.q))
    return DecClient(uid, x1, pk), DecServer(uid, x2, pk)


def seal(k: bytes, m: bytes, tag_len: int = TAG_BYTES) -> tuple[bytes, bytes]:
    return sym_encrypt(k, m), H1(k, m)[:tag_len]


def encrypt(pk: PublicKey, m: bytes, rng: Rng, tag_len: int = TAG_BYTES) -> tuple[Ciphertext, bytes]:
    """Returns the ciphertext and its one-time key k (the encryptor may open it)."""
    grp = pk.group
    t = grp.random_scalar(rng)
    k = H2(grp.encode(grp.exp(pk.X, t)))
    c1, c2 = seal(k, m, tag_len)
    return Ciphertext(grp.encode(grp.exp(grp.g, t)), c1, c2), k


def open_with_key(c: Ciphertext, k: bytes) -> bytes:
    m = sym_decrypt(k, c.c1)
    if not hmac.compare_digest(H1(k, m)[:len(c.c2)], c.c2):
        raise TagMismatch
    return m


def decrypt(client: DecClient, server: DecServer, c: Ciphertext, rng: Rng,
            bus: Bus | None = None, parties: tuple[str, str] = ("U", "ST")) -> Opening:
    """Blind two-party decryption. Returns the plaintext with its key k."""
    grp = client.pk.group
    K = grp.decode(c.kem)
    rho = grp.random_scalar(rng)
    B = grp.exp(K, client.x1 * rho % grp.q)
    if bus is not None:
        bus.send(parties[0], parties[1], "tdec", grp.encode(B), {"blinded_kem": grp.encode(B)})
    if server.budget <= 0 or not grp.contains(B):
        raise ServerRefused(server.uid)
    server.budget -= 1
    server.served += 1
    Z = grp.exp(B, server.x2)
    if bus is not None:
        bus.send(parties[1], parties[0], "tdec", grp.encode(Z), {"blinded_share": grp.encode(Z)})
    shared = grp.exp(Z, int(gmpy2.invert(rho, grp.q)))
    k = H2(grp.encode(shared))
    return Opening(open_with_key(c, k), k)


def decrypt_with_key(client: DecClient, server: DecServer, c: Ciphertext) -> Opening:
    """Both shares in one place. Only audit tooling holding both halves uses this."""
    grp = client.pk.group
    K = grp.decode(c.kem)
    k = H2(grp.encode(grp.exp(K, client.x1 * server.x2 % grp.q)))
    return Opening(open_with_key(c, k), k)


def verify_decryption(c: Ciphertext, opening: Opening) -> bool:
    if sym_decrypt(opening.k, c.c1) != opening.m:
        return False
    return hmac.compare_digest(H1(opening.k, opening.m)[:len(c.c2)], c.c2)


def toy_keys(bits: int = 8) -> list[bytes]:
    """A key space small enough to enumerate, for binding experiments."""
    return [H2(i.to_bytes(4, "big")) for i in range(2 ** bits)]


def second_openings(c: Ciphertext, m: bytes, keys) -> list[Opening]:
    """Every candidate key that opens c to something other than m and passes the tag check."""
    found = []
    for k in keys:
        other = sym_decrypt(k, c.c1)
        if other != m and verify_decryption(c, Opening(other, k)):
            found.append(Opening(other, k))
    return found
