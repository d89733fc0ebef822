"""Primitives shared by every other module.

Hashing, a counter-mode keystream cipher, a prime-order Schnorr group,
RSA key generation and full-domain-hash signatures, and a seedable RNG.
Everything is deterministic given a seed so whole protocol runs can be
replayed bit-for-bit.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import gmpy2

# Domain tags. The digest fold, the ciphertext binding tag and the KEM key
# derivation must never share a tag.
TAG_H = b"prettiness/H/digest"
TAG_H1 = b"prettiness/H1/bind"
TAG_H2 = b"prettiness/H2/kem"
TAG_KEYSTREAM = b"prettiness/keystream"
TAG_FDH = b"prettiness/fdh"
TAG_PIN = b"prettiness/pin"
TAG_RNG = b"prettiness/rng"

MR_ROUNDS = 64
RSA_BITS = 2048
SMALL_RSA_BITS = 512
RSA_E = 65537


def _u32(n: int) -> bytes:
    return n.to_bytes(4, "big")


def digest(tag: bytes, *parts: bytes) -> bytes:
    """SHA-256 over a tag and length-prefixed parts, so (a, bc) != (ab, c)."""
    h = hashlib.sha256()
    h.update(_u32(len(tag)) + tag)
    for p in parts:
        h.update(_u32(len(p)))
        h.update(p)
    return h.digest()


def H(*parts: bytes) -> bytes:
    return digest(TAG_H, *parts)


def H1(*parts: bytes) -> bytes:
    return digest(TAG_H1, *parts)


def H2(*parts: bytes) -> bytes:
    return digest(TAG_H2, *parts)


def expand(tag: bytes, seed: bytes, length: int) -> bytes:
    out = bytearray()
    ctr = 0
    while len(out) < length:
        out += hashlib.sha256(tag + seed + ctr.to_bytes(8, "big")).digest()
        ctr += 1
    return bytes(out[:length])


def sym_encrypt(key: bytes, msg: bytes) -> bytes:
    """Keystream XOR. Output length equals input length."""
    if not msg:
        return b""
    ks = expand(TAG_KEYSTREAM, key, len(msg))
    x = int.from_bytes(msg, "big") ^ int.from_bytes(ks, "big")
    return x.to_bytes(len(msg), "big")


sym_decrypt = sym_encrypt


def pin_key(pin: int, salt: bytes) -> bytes:
    return digest(TAG_PIN, pin.to_bytes(8, "big"), salt)


class Rng:
    """Counter-mode SHA-256 generator.

    ``fork(label)`` derives an independent child stream that does not depend
    on how much of the parent has been consumed, which keeps separate parts of
    a simulation reproducible when the order of draws changes.
    """

    def __init__(self, seed: int | bytes = 0):
        if isinstance(seed, int):
            if not 0 <= seed < 2**64:
                raise ValueError("seed must fit in 64 bits")
            seed = seed.to_bytes(8, "big")
        self._key = hashlib.sha256(TAG_RNG + seed).digest()
        self._ctr = 0
        self._buf = b""

    def fork(self, label: str) -> "Rng":
        child = Rng.__new__(Rng)
        child._key = hashlib.sha256(TAG_RNG + self._key + label.encode()).digest()
        child._ctr = 0
        child._buf = b""
        return child

    def bytes(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._buf += hashlib.sha256(self._key + self._ctr.to_bytes(8, "big")).digest()
            self._ctr += 1
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def bits(self, k: int) -> int:
        nbytes = (k + 7) // 8
        return int.from_bytes(self.bytes(nbytes), "big") >> (nbytes * 8 - k)

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("empty range")
        k = n.bit_length()
        while True:
            x = self.bits(k)
            if x < n:
                return x

    def between(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + self.below(hi - lo + 1)

    def choice(self, seq):
        return seq[self.below(len(seq))]

    def sample(self, seq, k: int) -> list:
        pool = list(seq)
        out = []
        for _ in range(k):
            out.append(pool.pop(self.below(len(pool))))
        return out


# -- primes -----------------------------------------------------------------

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(p**0.5) + 1))]
_SMALL_PRODUCT = gmpy2.mpz(math.prod(_SMALL_PRIMES))


def is_probable_prime(n: int, rng: Rng | None = None, rounds: int = MR_ROUNDS) -> bool:
    """Miller-Rabin with random bases drawn from ``rng``."""
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    if n < 2000:
        return n in _SMALL_PRIMES
    if gmpy2.gcd(n, _SMALL_PRODUCT) != 1:
        return False
    rng = rng or Rng(n % 2**64)
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    mn = gmpy2.mpz(n)
    for _ in range(rounds):
        a = rng.between(2, n - 2)
        x = gmpy2.powmod(a, d, mn)
        if x == 1 or x == mn - 1:
            continue
        for _ in range(s - 1):
            x = gmpy2.powmod(x, 2, mn)
            if x == mn - 1:
                break
        else:
            return False
    return True


def random_prime(bits: int, rng: Rng) -> int:
    """Incremental search from a random odd start with the top two bits set."""
    while True:
        c = rng.bits(bits) | (1 << (bits - 1)) | (1 << (bits - 2)) | 1
        while c.bit_length() == bits:
            if is_probable_prime(c, rng):
                return c
            c += 2


# -- RSA ----------------------------------------------------------------------


@dataclass(frozen=True)
class RsaPublicKey:
    n: int
    e: int

    @property
    def size(self) -> int:
        return (self.n.bit_length() + 7) // 8

    def to_bytes(self) -> bytes:
        return self.n.to_bytes(self.size, "big") + self.e.to_bytes(4, "big")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "RsaPublicKey":
        return cls(int.from_bytes(raw[:-4], "big"), int.from_bytes(raw[-4:], "big"))


@dataclass(frozen=True)
class RsaPrivateKey:
    n: int
    e: int
    d: int
    p: int
    q: int = field(repr=False)

    @property
    def public(self) -> RsaPublicKey:
        return RsaPublicKey(self.n, self.e)

    @property
    def lam(self) -> int:
        return int(gmpy2.lcm(self.p - 1, self.q - 1))


def rsa_keygen(rng: Rng, bits: int = RSA_BITS) -> RsaPrivateKey:
    if bits < RSA_BITS:
        warnings.warn(f"{bits}-bit RSA is for tests only and is not secure", stacklevel=2)
    while True:
        p = random_prime(bits // 2, rng)
        q = random_prime(bits - bits // 2, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != bits:
            continue
        lam = int(gmpy2.lcm(p - 1, q - 1))
        if gmpy2.gcd(RSA_E, lam) != 1:
            continue
        d = int(gmpy2.invert(RSA_E, lam))
        return RsaPrivateKey(n, RSA_E, d, p, q)


def fdh(msg: bytes, n: int) -> int:
    """Full-domain hash into Z_n (expanded 16 bytes past |n| to flatten bias)."""
    size = (n.bit_length() + 7) // 8
    return int.from_bytes(expand(TAG_FDH, hashlib.sha256(msg).digest(), size + 16), "big") % n


def i2b(x: int, size: int) -> bytes:
    return int(x).to_bytes(size, "big")


def rsa_sign(sk: RsaPrivateKey, msg: bytes) -> bytes:
    size = (sk.n.bit_length() + 7) // 8
    return i2b(gmpy2.powmod(fdh(msg, sk.n), sk.d, sk.n), size)


def rsa_verify(pk: RsaPublicKey, msg: bytes, sig: bytes) -> bool:
    if len(sig) != pk.size:
        return False
    s = int.from_bytes(sig, "big")
    if s >= pk.n:
        return False
    return int(gmpy2.powmod(s, pk.e, pk.n)) == fdh(msg, pk.n)


# -- Schnorr group ------------------------------------------------------------


@dataclass(frozen=True)
class SchnorrGroup:
    """Order-q subgroup of Z_p^* generated by g."""

    name: str
    p: int
    q: int
    g: int

    @property
    def element_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8

    def exp(self, base: int, e: int) -> int:
        return int(gmpy2.powmod(base, e, self.p))

    def contains(self, x: int) -> bool:
        return 1 < x < self.p and gmpy2.powmod(x, self.q, self.p) == 1

    def random_scalar(self, rng: Rng) -> int:
        return rng.between(1, self.q - 1)

    def encode(self, x: int) -> bytes:
        return i2b(x, self.element_bytes)

    def decode(self, raw: bytes) -> int:
        if len(raw) != self.element_bytes:
            raise ValueError("bad element width")
        return int.from_bytes(raw, "big")


def generate_group(name: str, pbits: int, qbits: int, rng: Rng) -> SchnorrGroup:
    """Search p = kq + 1. Used once to produce the frozen constants below."""
    q = random_prime(qbits, rng)
    while True:
        k = rng.bits(pbits - qbits) | (1 << (pbits - qbits - 1))
        k -= k % 2
        p = k * q + 1
        if p.bit_length() == pbits and is_probable_prime(p, rng):
            break
    h = 2
    while True:
        g = int(gmpy2.powmod(h, (p - 1) // q, p))
        if g != 1:
            return SchnorrGroup(name, p, q, g)
        h += 1


# Frozen output of scripts/gen_groups.py.
GROUP_2048 = SchnorrGroup(
    'schnorr-2048-256',
    int(
        "ef7988c1f102d271cb0d6ea605cbd9d1eb7f80fe5833066f4756db9e177158ae"
        "49f1e7845f74f0ac85afe7ad5effff7b9f72d8019e9dcf5e6f6081d44cce2769"
        "17b95eb7d8007ef0fe8ff4415baf0ec6b7c8b28e0ae1c80ed1b2729b07c9afd3"
        "bb8105dcf5783bfdedfed05c0d3b2b28e2090baeb504cec603121464cf33e2fe"
        "0022571099fcb8cba01bd5a083c74d5456a467316efcef11e4fe3446764c802e"
        "68c8db962bc8182e18c71ac9e1235b55cc4b2ef9fdd3fc06dd66103728cfa977"
        "047af0d4894351a999a14615b8e68ed68c69ceafc5f88775d2ab73d9ef9e1a2e"
        "6481fc991732547bac35ffbca3dec48df696f0b6ccdef00adce19dc77e56009f"
        , 16),
    0xfd7a0d1da344bb6074acb34c208181f57b34a57fb65b60b7dc64f435bbcdc131,
    int(
        "57c9da8c2187b381b35e698b26a3b760f0a40263820b669d2c1b7bd6e284bb4f"
        "1118185f3bdf7ac4619dc437587fc9e0a8ac95b18c0fdabb37becc6a30718459"
        "bdc222c39d8672386f234db120e7d135e8c4631d359a8e6c2cec0b43c8e17def"
        "066da61b8cae7005bd538078c6b7b1b0c6927929cbd54bbfe25a2ba90909ea3b"
        "499d5aeb38a6fe887dc3e194c739f310999dbf92d2ad42eba8abf590af803570"
        "4791bd9f2e4e8aef90913707893a4b4d833fe781b0b5b240e56560b49ec7fc41"
        "46e0ee78394376bcd90ad489cc4ff8f2e3b165a7f0cafe03665c012d8d3d5a56"
        "78fa0b568c99839eabc37132bded2130f9490310f40c006939a353e823f78aae"
        , 16),
)
GROUP_TEST = SchnorrGroup(
    'schnorr-1024-160-test',
    int(
        "d99e729e94c9363277b4a4534f981b59e934598fd02553e10575994ae4444881"
        "c7d01625b943eb1ed66a4e468769098f4bd8637b3b09d53f334e4999afc0cbda"
        "7503e9af66e9e1b01e280691f293d4269a2910409b316a761241cb2e2cac8aa1"
        "873a3a26c0d9280f55ea7e58cae4dcac79624a1f1decc71e1e082cb490a4e56f"
        , 16),
    0xdf178c82c30025cbc5df46b7b1e7f63f8a969ab3,
    int(
        "2d8f0a53552d2fb0c68216d57d0935a1fafb0918785dd27d3061e060e4692964"
        "b25859c43c03ced135807c8c9e84f417c0aa27686146e6820c1798b7845d985f"
        "7ee7a4e010a0bec30f1fd27c88a7f14033f8c21b97e2c8269ab6a54062fc2e19"
        "72a759b5cc41fbd6ccf86a3cf31c51b5507e6cb33a667630b835ddaa13c9a192"
        , 16),
)


@dataclass(frozen=True)
class Suite:
    """Key sizes for one deployment. ``Suite.test()`` trades security for speed."""

    rsa_bits: int = RSA_BITS
    group: SchnorrGroup = GROUP_2048

    @property
    def insecure(self) -> bool:
        return self.rsa_bits < RSA_BITS or self.group is GROUP_TEST

    @property
    def sig_bytes(self) -> int:
        return self.rsa_bits // 8

    @classmethod
    def test(cls) -> "Suite":
        return cls(SMALL_RSA_BITS, GROUP_TEST)


FULL = Suite()
TEST = Suite.test()
