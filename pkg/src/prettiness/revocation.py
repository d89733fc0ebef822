"""Revocation registry hosted next to the support server.

The registry is a trusted service: the server that hosts it only learns what
the leakage records in ``leak_log`` say it learns. Parties talk to it over the
bus so that its traffic is metered like everything else.

Notification downloads have a fixed shape:

    request  = tag (1) || sid (8) || nonce (16)
    response = version (1) || sid (8) || epoch (8) || count (8)
               || list digest (32) || server nonce (32) || 32 bytes per entry

which is 114 + 32*m bytes for m revoked tokens. Entries are keyed hashes of
the tokens, so a download does not reveal which tokens were revoked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .crypto_suite import RsaPrivateKey, RsaPublicKey, Rng, digest, rsa_sign, rsa_verify
from .wire import TAG_NOTIFY, Bus, NullBus, Reader, canon, encode_field

TOKEN_BYTES = 32
UNIVERSE = 2 ** (8 * TOKEN_BYTES)
REGISTRY = "FREV"
NOTIFY_REQUEST_BYTES = 25
NOTIFY_HEADER_BYTES = 89
_TAG_ENTRY = b"prettiness/rev-entry"


class RevocationError(Exception):
    pass


class NotRevoker(RevocationError):
    pass


class UnknownToken(RevocationError):
    pass


class NoSnapshot(RevocationError):
    pass


class BadReceipt(RevocationError):
    pass


class UniverseExhausted(RevocationError):
    pass


@dataclass
class TokenInfo:
    users: set[str]
    revokers: set[str]
    issued_at: int


@dataclass(frozen=True)
class RevocationReceipt:
    token: bytes
    revoker: str
    sid: int
    index: int
    signature: bytes

    def body(self) -> bytes:
        return self.token + encode_field(self.revoker) + encode_field(self.sid) + encode_field(self.index)

    def wire(self) -> bytes:
        return self.body() + self.signature

    @classmethod
    def from_wire(cls, raw: bytes, sig_bytes: int) -> "RevocationReceipt":
        r = Reader(raw)
        token = r.take(TOKEN_BYTES)
        revoker = r.str()
        sid = r.int()
        index = r.int()
        sig = r.take(sig_bytes)
        if not r.done():
            raise ValueError("trailing bytes")
        return cls(token, revoker, sid, index, sig)


@dataclass(frozen=True)
class Snapshot:
    verifier: str
    epoch: int
    tokens: frozenset[bytes]


@dataclass(frozen=True)
class CheatVerdict:
    blamed: frozenset[str]


def notify_bytes(m: int) -> int:
    return NOTIFY_REQUEST_BYTES + NOTIFY_HEADER_BYTES + 32 * m


class Registry:
    def __init__(self, key: RsaPrivateKey, rng: Rng, N: int = UNIVERSE, bus: Bus | None = None,
                 host: str = "AMS"):
        self.key = key
        self.rng = rng
        self.N = N
        self.bus = bus or NullBus()
        self.host = host
        self.tokens: dict[bytes, TokenInfo] = {}
        self.revoked: dict[int, tuple[bytes, str, int]] = {}  # sid -> (x, revoker, time)
        self.log: list[int] = []  # revocation sids in order
        self.pairs: dict[tuple[bytes, str], tuple[int, int]] = {}
        self.archive: dict[int, tuple[bytes, str, int]] = {}
        self.snapshots: dict[str, Snapshot] = {}
        self.hidden: dict[str, set[bytes]] = {}
        self.verified_by: dict[str, set[bytes]] = {}
        self.leak_log: list[dict] = []
        self.adversarial = False
        self.now = 0

    @property
    def pk(self) -> RsaPublicKey:
        return self.key.public

    # -- helpers --------------------------------------------------------------

    def _leak(self, op: str, **fields) -> None:
        routine, sid = self.bus.current
        self.leak_log.append({"op": op, "routine": routine, "sid": sid, **fields})

    def revoked_set(self) -> set[bytes]:
        return {x for x, _, _ in self.revoked.values()}

    def revoked_count(self) -> int:
        return len(self.revoked_set())

    def owner(self, x: bytes) -> set[str]:
        info = self.tokens.get(x)
        return set(info.users) if info else set()

    # -- issuing --------------------------------------------------------------

    def issue_token(self, user: str, revoker: str, rng: Rng) -> bytes:
        if len(self.tokens) >= self.N:
            raise UniverseExhausted
        self.bus.send(user, REGISTRY, "rev-issue", canon(revoker), {"R": revoker})
        if revoker != user:
            self.bus.send(revoker, REGISTRY, "rev-issue", canon(user), {"U": user})
        while True:
            x = rng.below(self.N).to_bytes(TOKEN_BYTES, "big")
            if x not in self.tokens:
                break
        self.bus.send(REGISTRY, user, "rev-issue", x, {"x": x})
        if revoker != user:
            self.bus.send(REGISTRY, revoker, "rev-issue", x, {"x": x})
        self.tokens[x] = TokenInfo({user}, {revoker}, self.now)
        self._leak("issue", U=user, R=revoker, x=x)
        return x

    def withdraw(self, x: bytes) -> None:
        """Forget a token whose issuing session aborted. Never touches X-."""
        if x in self.revoked_set():
            raise RevocationError("cannot withdraw a revoked token")
        self.tokens.pop(x, None)

    # -- revocation -----------------------------------------------------------

    def _receipt(self, x: bytes, revoker: str, sid: int, index: int) -> RevocationReceipt:
        body = x + encode_field(revoker) + encode_field(sid) + encode_field(index)
        return RevocationReceipt(x, revoker, sid, index, rsa_sign(self.key, body))

    def revoke(self, requester: str, x: bytes, sid: int) -> RevocationReceipt:
        self.bus.send(requester, REGISTRY, "rev-revoke", canon(x, sid), {"x": x})
        info = self.tokens.get(x)
        legit = info is not None and requester in info.revokers
        self._leak("revoke", R=requester, legit=legit, x=x,
                   users=frozenset(info.users) if info else frozenset(),
                   presented_to=frozenset(v for v, xs in self.verified_by.items() if x in xs))
        if not legit:
            self.bus.send(REGISTRY, requester, "rev-revoke", b"\x00", {"fail": "not-revoker"})
            raise NotRevoker(requester)
        if (x, requester) in self.pairs:
            receipt = self._receipt(x, requester, *self.pairs[(x, requester)])
        else:
            if sid in self.revoked or sid in self.archive:
                raise RevocationError(f"sid {sid} already used")
            self.revoked[sid] = (x, requester, self.now)
            self.log.append(sid)
            self.pairs[(x, requester)] = (sid, len(self.log) - 1)
            receipt = self._receipt(x, requester, sid, len(self.log) - 1)
        self.bus.send(REGISTRY, requester, "rev-revoke", receipt.wire(), {"receipt": receipt.token})
        return receipt

    def verify_receipt(self, receipt: RevocationReceipt) -> bool:
        return rsa_verify(self.pk, receipt.body(), receipt.signature)

    # -- notification ---------------------------------------------------------

    def _download(self, party: str, tokens: frozenset[bytes], epoch: int, view: dict) -> None:
        _, sid = self.bus.current
        nonce = self.rng.bytes(16)
        self.bus.send(party, REGISTRY, "notify", TAG_NOTIFY.to_bytes(1, "big") + sid.to_bytes(8, "big") + nonce,
                      {"req": "notify"})
        key = self.rng.bytes(32)
        entries = sorted(digest(_TAG_ENTRY, key, x) for x in tokens)
        body = b"".join(entries)
        header = (b"\x01" + sid.to_bytes(8, "big") + epoch.to_bytes(8, "big")
                  + len(entries).to_bytes(8, "big") + digest(_TAG_ENTRY, body) + self.rng.bytes(32))
        assert len(header) == NOTIFY_HEADER_BYTES
        self.bus.send(REGISTRY, party, "notify", len(header) + len(body), view)

    def unotify(self, user: str, xs: list[bytes]) -> list[bool]:
        """One download answers every token the user asks about."""
        live = self.revoked_set()
        bits = [x in live and user in self.owner(x) for x in xs]
        with self.bus.routine("DBupdate"):
            self._download(user, frozenset(live), len(self.log), {"b": tuple(bits)})
        for x in xs:
            self._leak("unotify", U=user, x=x)
        return bits

    def vnotify(self, verifier: str) -> Snapshot:
        hidden = self.hidden.pop(verifier, set())
        if hidden:
            self.adversarial = True
        snap = Snapshot(verifier, len(self.log), frozenset(self.revoked_set() - hidden))
        self.snapshots[verifier] = snap
        with self.bus.routine("DBupdate"):
            self._download(verifier, snap.tokens, snap.epoch, {"ok": True})
        self._leak("vnotify", V=verifier)
        return snap

    def verify_token(self, user: str, verifier: str, x: bytes) -> bool:
        snap = self.snapshots.get(verifier)
        if snap is None:
            raise NoSnapshot(verifier)
        self.bus.send(user, REGISTRY, "rev-verify", canon(x, verifier), {"x": x})
        self.bus.send(verifier, REGISTRY, "rev-verify", b"\x01", {})
        ok = x not in snap.tokens
        self.bus.send(REGISTRY, verifier, "rev-verify", x + bytes([ok]), {"x": x, "b": ok})
        self.bus.send(REGISTRY, user, "rev-verify", b"\x01", {})
        self.verified_by.setdefault(verifier, set()).add(x)
        self._leak("verify", V=verifier, U=user, x=x, fresh=not any(x == xx for xx, _, _ in self.revoked.values()),
                   revsids=frozenset(s for s, (xx, _, _) in self.revoked.items() if xx == x))
        return ok

    # -- accountability -------------------------------------------------------

    def detect_cheating(self, party: str, revoker: str, receipt: RevocationReceipt,
                        contested: Snapshot) -> CheatVerdict:
        if receipt.revoker != revoker or not self.verify_receipt(receipt):
            raise BadReceipt(party)
        if receipt.index < contested.epoch and receipt.token not in contested.tokens:
            return CheatVerdict(frozenset({self.host}))
        return CheatVerdict(frozenset())

    # -- covert-server hooks and upkeep --------------------------------------

    def tamper_hide(self, verifier: str, x: bytes) -> None:
        self.hidden.setdefault(verifier, set()).add(x)

    def expire(self, now: int, delta: int) -> list[int]:
        gone = [s for s, (_, _, t) in self.revoked.items() if now - t > delta]
        for s in gone:
            self.archive[s] = self.revoked.pop(s)
        return gone

    def seed_revoked(self, m: int, rng: Rng, revoker: str = "seed") -> None:
        """Bulk-load m issued-and-revoked tokens without traffic (bench set-up)."""
        base = 10**12
        for i in range(m):
            x = rng.bytes(TOKEN_BYTES)
            self.tokens[x] = TokenInfo({revoker}, {revoker}, self.now)
            sid = base + len(self.log)
            self.revoked[sid] = (x, revoker, self.now)
            self.log.append(sid)
            self.pairs[(x, revoker)] = (sid, len(self.log) - 1)
