"""PIN-protected two-party RSA signing between a device and a support server.

The dealer splits d into multiplicative shares d = d1 * d2 mod lambda(n).
The device keeps d1 encrypted under a key derived from the PIN, so a wrong
PIN silently produces a wrong partial signature; the server notices only
because the combined signature fails to verify, and counts the failure.

Each request also carries the current clone nonce r and the next one r'.
The server stores H(r) and moves to H(r') after every accepted nonce, so two
copies of the same device state cannot both keep talking to the server.

Wire layout (no framing beyond the transport):

    request  = y (|n| bytes) || r (16) || r' (16) || payload
    response = s (|n| bytes) || payload

where payload is m, or the blinded digest (|n| bytes) in blind mode.
"""

from __future__ import annotations

import hmac
from dataclasses import dataclass, field

import gmpy2

from .crypto_suite import (FULL, H, RsaPublicKey, Rng, Suite, fdh, i2b, pin_key,
                           rsa_keygen, rsa_verify, sym_decrypt, sym_encrypt)
from .wire import Bus

NONCE_BYTES = 16


class InvalidPin(ValueError):
    pass


class SignError(Exception):
    pass


class PinMismatch(SignError):
    pass


class Blocked(SignError):
    pass


class CloneDetected(Blocked):
    pass


@dataclass
class ClientShare:
    uid: str
    pk: RsaPublicKey
    d1_encrypted: bytes = field(repr=False)
    salt: bytes
    clone_nonce: bytes
    next_clone_nonce: bytes
    L: int


@dataclass
class ServerShare:
    uid: str
    pk: RsaPublicKey
    d2: int = field(repr=False)
    expected_clone_hash: bytes
    T0: int
    T: int = 0
    ok: bool = True
    clone_detected: bool = False
    sessions: int = 0


@dataclass(frozen=True)
class SignRequest:
    y: int
    payload: bytes
    r: bytes
    r_next: bytes

    def wire(self, size: int) -> bytes:
        return i2b(self.y, size) + self.r + self.r_next + self.payload


@dataclass(frozen=True)
class SignResponse:
    s: int
    payload: bytes

    def wire(self, size: int) -> bytes:
        return i2b(self.s, size) + self.payload


def message_bytes(m_len: int, modulus_bytes: int = 256) -> int:
    """Traffic of one session: 2|n| + 2*16 + 2|m|; 544 + 2|m| at 2048 bits."""
    if m_len < 0:
        raise ValueError("negative length")
    return 2 * modulus_bytes + 2 * NONCE_BYTES + 2 * m_len


def keygen(uid: str, pin: int, L: int, T0: int, rng: Rng,
           suite: Suite = FULL) -> tuple[ClientShare, ServerShare, RsaPublicKey]:
    if not 0 <= pin < L:
        raise InvalidPin(pin)
    if T0 < 1:
        raise ValueError("T0 must be at least 1")
    sk = rsa_keygen(rng, suite.rsa_bits)
    lam = sk.lam
    while True:
        d1 = rng.between(2, lam - 1)
        if gmpy2.gcd(d1, lam) == 1:
            break
    d2 = int(sk.d * gmpy2.invert(d1, lam) % lam)
    size = sk.public.size
    salt = rng.bytes(16)
    r = rng.bytes(NONCE_BYTES)
    client = ClientShare(uid, sk.public, sym_encrypt(pin_key(pin, salt), i2b(d1, size)),
                         salt, r, rng.bytes(NONCE_BYTES), L)
    server = ServerShare(uid, sk.public, d2, H(r), T0)
    return client, server, sk.public


def _check_pin(client: ClientShare, pin: int) -> None:
    if not 0 <= pin < client.L:
        raise InvalidPin(pin)


def client_request(client: ClientShare, m: bytes, pin: int, rng: Rng, blind: bool = False,
                   rho: int | None = None) -> tuple[SignRequest, int | None]:
    """Build a request. Returns it with the blinding factor (None if not blind)."""
    _check_pin(client, pin)
    n, e = client.pk.n, client.pk.e
    d1 = int.from_bytes(sym_decrypt(pin_key(pin, client.salt), client.d1_encrypted), "big")
    h = fdh(m, n)
    if blind:
        if rho is None:
            while True:
                rho = rng.between(2, n - 1)
                if gmpy2.gcd(rho, n) == 1:
                    break
        h = h * int(gmpy2.powmod(rho, e, n)) % n
        payload = i2b(h, client.pk.size)
    else:
        payload = m
    y = int(gmpy2.powmod(h, d1, n))
    return SignRequest(y, payload, client.clone_nonce, client.next_clone_nonce), rho


def server_respond(server: ServerShare, req: SignRequest, blind: bool = False) -> SignResponse:
    """Clone check first, then the PIN check carried by the signature itself."""
    if not server.ok:
        raise CloneDetected(server.uid) if server.clone_detected else Blocked(server.uid)
    if not hmac.compare_digest(H(req.r), server.expected_clone_hash):
        server.ok = False
        server.clone_detected = True
        raise CloneDetected(server.uid)
    server.expected_clone_hash = H(req.r_next)
    n, e = server.pk.n, server.pk.e
    h = int.from_bytes(req.payload, "big") % n if blind else fdh(req.payload, n)
    s = int(gmpy2.powmod(req.y, server.d2, n))
    if int(gmpy2.powmod(s, e, n)) != h:
        server.T += 1
        if server.T >= server.T0:
            server.ok = False
            raise Blocked(server.uid)
        raise PinMismatch(server.uid)
    server.T = 0
    server.sessions += 1
    return SignResponse(s, req.payload)


def advance(client: ClientShare, rng: Rng) -> None:
    client.clone_nonce = client.next_clone_nonce
    client.next_clone_nonce = rng.bytes(NONCE_BYTES)


def client_finish(client: ClientShare, resp: SignResponse, rho: int | None) -> bytes:
    n = client.pk.n
    s = resp.s
    if rho is not None:
        s = s * int(gmpy2.invert(rho, n)) % n
    return i2b(s, client.pk.size)


def sign(client: ClientShare, server: ServerShare, m: bytes, pin: int, rng: Rng,
         blind: bool = False, bus: Bus | None = None,
         parties: tuple[str, str] = ("U", "ST")) -> bytes:
    """Run one session. Raises PinMismatch, Blocked or CloneDetected on failure.

    The device advances its nonce chain whenever the server processed the
    nonce, including on a PIN failure, since the server did too.
    """
    size = client.pk.size
    req, rho = client_request(client, m, pin, rng, blind)
    if bus is not None:
        view = {"y": i2b(req.y, size), "r": req.r, "r_next": req.r_next}
        view["blinded" if blind else "m"] = req.payload
        bus.send(parties[0], parties[1], "tsign", req.wire(size), view)
    try:
        resp = server_respond(server, req, blind)
    except PinMismatch:
        advance(client, rng)
        if bus is not None:
            bus.send(parties[1], parties[0], "tsign-fail", b"\x00", {"fail": "pin"})
        raise
    except SignError:
        if bus is not None:
            bus.send(parties[1], parties[0], "tsign-fail", b"\x00", {"fail": "blocked"})
        raise
    if bus is not None:
        bus.send(parties[1], parties[0], "tsign", resp.wire(size),
                 {"s": i2b(resp.s, size), "blinded" if blind else "m": resp.payload})
    advance(client, rng)
    return client_finish(client, resp, rho)


def verify(pk: RsaPublicKey, m: bytes, sig: bytes) -> bool:
    return rsa_verify(pk, m, sig)
