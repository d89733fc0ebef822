"""Certified issuer signatures: RSA-FDH-SHA256 keyed by issuer identity.

Real parties verify with plain RSA (``verify_raw``). The ``SignatureRegistry``
keeps the bookkeeping an ideal certified-signature service would keep, and
``verify`` answers from it. Tests run both routes side by side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .crypto_suite import FULL, RsaPrivateKey, RsaPublicKey, Rng, Suite, rsa_keygen, rsa_sign, rsa_verify


class DuplicateIssuer(Exception):
    pass


class UnknownIssuer(Exception):
    pass


@dataclass(frozen=True)
class IssuerKey:
    iid: str
    sk: RsaPrivateKey = field(repr=False)

    @property
    def pk(self) -> RsaPublicKey:
        return self.sk.public


# Adversary callback: (iid, m, sig) -> verdict bit.
Phi = Callable[[str, bytes, bytes], int]


class SignatureRegistry:
    """Per-signer table of (message, signature, verdict) triples."""

    def __init__(self):
        self.records: dict[str, dict[tuple[bytes, bytes], int]] = {}
        self.corrupted: set[str] = set()

    def record(self, iid: str, m: bytes, sig: bytes, f: int) -> None:
        self.records.setdefault(iid, {})[(m, sig)] = f

    def verify(self, iid: str, m: bytes, sig: bytes, phi: Phi) -> int:
        table = self.records.setdefault(iid, {})
        if table.get((m, sig)) == 1:
            return 1
        if iid not in self.corrupted and not any(
                mm == m and f == 1 for (mm, _), f in table.items()):
            table[(m, sig)] = 0
            return 0
        if (m, sig) in table:
            return table[(m, sig)]
        f = 1 if phi(iid, m, sig) else 0
        table[(m, sig)] = f
        return f


class IssuerDirectory:
    """Registers issuers, signs on their behalf and verifies under their identity."""

    def __init__(self, suite: Suite = FULL, adversary: Phi | None = None):
        self.suite = suite
        self.keys: dict[str, RsaPublicKey] = {}
        self.registry = SignatureRegistry()
        self.adversary = adversary or (lambda iid, m, sig: int(self.verify_raw(iid, m, sig)))

    def register(self, iid: str, rng: Rng) -> IssuerKey:
        if iid in self.keys:
            raise DuplicateIssuer(iid)
        key = IssuerKey(iid, rsa_keygen(rng, self.suite.rsa_bits))
        self.keys[iid] = key.pk
        return key

    def public_key(self, iid: str) -> RsaPublicKey:
        try:
            return self.keys[iid]
        except KeyError:
            raise UnknownIssuer(iid) from None

    def corrupt(self, iid: str) -> None:
        self.registry.corrupted.add(iid)

    def sign(self, key: IssuerKey, m: bytes) -> bytes:
        sig = rsa_sign(key.sk, m)
        self.registry.record(key.iid, m, sig, 1)
        return sig

    def verify(self, iid: str, m: bytes, sig: bytes) -> bool:
        self.public_key(iid)
        return self.registry.verify(iid, m, sig, self.adversary) == 1

    def verify_raw(self, iid: str, m: bytes, sig: bytes) -> bool:
        return rsa_verify(self.public_key(iid), m, sig)
