"""User, support server (AMS), issuer and relying party, and the routines they run.

A ``Deployment`` holds the shared infrastructure: configuration, the bus, the
issuer key directory, the published user keys and the support server (which
hosts the revocation registry). Each routine is a plain function taking the
participating parties; it either returns its outputs or raises a
``ProtocolError`` after rolling back any state it had staged.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

from . import split_decrypt as tdec
from . import split_sign as tsign
from .certified_sign import IssuerDirectory, IssuerKey, UnknownIssuer
from .crypto_suite import FULL, H, RsaPrivateKey, RsaPublicKey, Rng, Suite, rsa_keygen, rsa_sign, rsa_verify
from .revocation import NoSnapshot, NotRevoker, RevocationReceipt, Registry
from .split_decrypt import Ciphertext, Opening
from .wire import (TAG_CIDS, TAG_ISSUE, TAG_PRES, TAG_REV, TAG_VERIFY, Bus, NullBus, Reader, canon,
                   encode_field, u32)

PK_BINDING = "pk-binding"
REV = "rev"
RESERVED = {PK_BINDING, REV}
CID_BYTES = 16
CH_BYTES = 32
ZERO_DIGEST = bytes(32)
AMS = "AMS"


# -- errors -------------------------------------------------------------------


class ProtocolError(Exception):
    pass


class DuplicateUser(ProtocolError):
    pass


class AuthFail(ProtocolError):
    pass


class StaleCid(ProtocolError):
    pass


class BadIssuerSig(ProtocolError):
    pass


class BadSig(ProtocolError):
    pass


class MalformedAttribute(ProtocolError):
    pass


class RevMismatch(ProtocolError):
    pass


class DigestMismatch(ProtocolError):
    pass


class UnknownCid(ProtocolError):
    pass


class BadSubset(ProtocolError):
    pass


class Revoked(ProtocolError):
    pass


class StaleChallenge(ProtocolError):
    pass


class UnknownPresentation(ProtocolError):
    pass


# -- data ---------------------------------------------------------------------


def summary(uid: str, aids, iid: str) -> str:
    return f"{uid}:{iid}:{','.join(sorted(aids))}"


def parse_summary(s: str) -> tuple[str, str, tuple[str, ...]]:
    uid, iid, rest = s.split(":", 2)
    return uid, iid, tuple(a for a in rest.split(",") if a)


def check_id(name: str) -> str:
    if not name or ":" in name or "," in name:
        raise ValueError(f"bad identifier {name!r}")
    return name


@dataclass(frozen=True, order=True)
class CredentialId:
    id: bytes
    summary: str

    def wire(self) -> bytes:
        return canon(self.id, self.summary)

    @classmethod
    def read(cls, r: Reader) -> "CredentialId":
        return cls(r.bytes(), r.str())

    def to_json(self) -> dict:
        return {"id": self.id.hex(), "summary": self.summary}

    def __str__(self) -> str:
        return f"{self.id.hex()[:8]}/{self.summary}"


@dataclass(frozen=True)
class Credential:
    entries: tuple[tuple[str, Ciphertext], ...]

    def wire(self) -> bytes:
        return u32(len(self.entries)) + b"".join(encode_field(a) + c.wire() for a, c in self.entries)

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.wire()).digest()

    @property
    def aids(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.entries if a not in RESERVED)

    def slot(self, aid: str) -> Ciphertext:
        for a, c in self.entries:
            if a == aid:
                return c
        raise KeyError(aid)


@dataclass(frozen=True)
class Presentation:
    aids: tuple[str, ...]
    atrs: tuple[str, ...]
    iid: str

    def to_json(self) -> dict:
        return {"aids": list(self.aids), "atrs": list(self.atrs), "iid": self.iid}


@dataclass(frozen=True)
class StoredCredential:
    cred: Credential
    sigma: bytes
    c_rev_r: Ciphertext

    def digest(self, cid: CredentialId) -> bytes:
        return H(canon(cid, self.cred, self.sigma))


@dataclass
class PresentationSecrets:
    pres: Presentation
    cred: Credential
    sigma_cred: bytes
    rev: tuple[bytes, bytes]
    k_rev: bytes
    k_pk: bytes
    ks: tuple[bytes, ...]


@dataclass(frozen=True)
class PresentationBundle:
    uid: str
    cred: Credential
    sigma_cred: bytes
    aids: tuple[str, ...]
    atrs: tuple[str, ...]
    iid: str
    rev: tuple[bytes, bytes]
    sigma_pres: bytes
    ch: bytes
    pk: bytes
    k_rev: bytes
    k_pk: bytes
    ks: tuple[bytes, ...]

    def wire(self) -> bytes:
        return canon(self.uid, self.cred, self.sigma_cred, self.aids, self.atrs, self.iid,
                     self.rev, self.sigma_pres, self.ch, self.pk, self.k_rev, self.k_pk, self.ks)

    def view(self) -> dict:
        return {"uid": self.uid, "cred": self.cred.fingerprint(), "sigma_cred": self.sigma_cred,
                "aids_dscl": self.aids, "atrs_dscl": self.atrs, "iid": self.iid,
                "rev_I": self.rev[0], "rev_U": self.rev[1], "sigma_pres": self.sigma_pres, "ch": self.ch}


def presentation_message(aids, atrs, iid: str, cred: Credential, sigma_cred: bytes, ch: bytes) -> bytes:
    return canon(tuple(aids), tuple(atrs), iid, cred, sigma_cred, ch)


@dataclass(frozen=True)
class VerifyResult:
    verdict: int
    reason: str = "ok"


@dataclass(frozen=True)
class ReAnchor:
    """Signed note that some of a user's entries were archived."""

    uid: str
    epoch: int
    removed: tuple[tuple[int, bytes], ...]  # (position before archival, entry digest)
    signature: bytes

    def body(self) -> bytes:
        return canon(self.uid, self.epoch, tuple(canon(p, d) for p, d in self.removed))

    def wire(self) -> bytes:
        return self.body() + encode_field(self.signature)


@dataclass
class LogRecord:
    time: int
    tag: int
    uid: str
    fields: dict
    status: str = "ok"


@dataclass(frozen=True)
class LogEntry:
    time: int
    routine: str
    details: dict


@dataclass
class AmsEntry:
    cid: CredentialId
    stored: StoredCredential
    stored_at: int


# -- configuration and parties --------------------------------------------------


def default_validator(aid: str, value: str) -> bool:
    return isinstance(value, str) and 0 < len(value) <= 256 and value.isprintable()


@dataclass(frozen=True)
class Config:
    suite: Suite = FULL
    L: int = 10_000
    T0: int = 3
    delta: int = 10**6


@dataclass
class User:
    uid: str
    share: tsign.ClientShare
    dec: tdec.DecClient
    h_cred: bytes = ZERO_DIGEST
    db: dict[CredentialId, StoredCredential] = field(default_factory=dict)
    receipts: list[RevocationReceipt] = field(default_factory=list)
    presentations: dict = field(default_factory=dict)
    # Opening keys of the pk-binding slot. They only open a public value.
    pk_keys: dict[CredentialId, bytes] = field(default_factory=dict)
    anchor_epoch: int = 0

    @property
    def name(self) -> str:
        return f"U:{self.uid}"


@dataclass
class Issuer:
    iid: str
    key: IssuerKey
    attribute_source: Callable[..., list[str]]
    db: dict[CredentialId, bytes] = field(default_factory=dict)
    seen: set[CredentialId] = field(default_factory=set)
    receipts: list[RevocationReceipt] = field(default_factory=list)
    skip_validation: bool = False  # corrupted-issuer hook

    @property
    def name(self) -> str:
        return f"I:{self.iid}"


@dataclass
class RelyingParty:
    rid: str
    outstanding: set[bytes] = field(default_factory=set)
    retired: set[bytes] = field(default_factory=set)
    received: list = field(default_factory=list)  # bundles, newest last

    @property
    def name(self) -> str:
        return f"RP:{self.rid}"

    def challenge(self, rng: Rng) -> bytes:
        while True:
            ch = rng.bytes(CH_BYTES)
            if ch not in self.retired and ch not in self.outstanding:
                self.outstanding.add(ch)
                return ch


class Ams:
    """Support server: key halves, backups, log and the revocation registry."""

    name = AMS

    def __init__(self, key: RsaPrivateKey, registry: Registry, delta: int):
        self.key = key
        self.registry = registry
        self.delta = delta
        self.sign_servers: dict[str, tsign.ServerShare] = {}
        self.dec_servers: dict[str, tdec.DecServer] = {}
        self.db: dict[str, list[AmsEntry]] = {}
        self.archive: dict[str, list[AmsEntry]] = {}
        self.reanchors: dict[str, list[ReAnchor]] = {}
        self.log: list[LogRecord] = []
        self.now = 0
        self.tamper: dict[str, dict] = {}
        self.captured: list[tuple] = []  # issue requests seen, for replay hooks

    def record(self, tag: int, uid: str, fields: dict, status: str = "ok") -> LogRecord:
        rec = LogRecord(self.now, int(tag), uid, fields, status)
        self.log.append(rec)
        return rec

    def backup(self, uid: str) -> list[AmsEntry]:
        entries = list(self.db.get(uid, []))
        t = self.tamper.pop("backup", None)
        if t and entries:
            i = t.get("index", 0) % len(entries)
            kind = t["mutation"]
            if kind == "omit":
                del entries[i]
            elif kind == "reorder" and len(entries) > 1:
                j = (i + 1) % len(entries)
                entries[i], entries[j] = entries[j], entries[i]
            elif kind == "duplicate":
                entries.insert(i, entries[i])
            elif kind == "modify":
                e = entries[i]
                bad = bytearray(e.stored.sigma)
                bad[-1] ^= 1
                entries[i] = AmsEntry(e.cid, StoredCredential(e.stored.cred, bytes(bad), e.stored.c_rev_r),
                                      e.stored_at)
            elif kind == "relabel":
                e = entries[i]
                entries[i] = AmsEntry(CredentialId(bytes(CID_BYTES), e.cid.summary), e.stored, e.stored_at)
            else:
                raise ValueError(f"unknown backup mutation {kind}")
        return entries


class Deployment:
    def __init__(self, config: Config, rng: Rng, bus: Bus | None = None):
        self.config = config
        self.bus = bus if bus is not None else NullBus()
        self.directory = IssuerDirectory(config.suite)
        key = rsa_keygen(rng.fork("ams-key"), config.suite.rsa_bits)
        registry = Registry(key, rng.fork("registry"), bus=self.bus)
        self.ams = Ams(key, registry, config.delta)
        self.user_keys: dict[str, tuple[RsaPublicKey, tdec.PublicKey]] = {}
        self.validators: dict[str, Callable[[str, str], bool]] = {}
        self.users: dict[str, User] = {}
        self.issuers: dict[str, Issuer] = {}
        self.rps: dict[str, RelyingParty] = {}

    @property
    def registry(self) -> Registry:
        return self.ams.registry

    def valid(self, aid: str, value: str) -> bool:
        return self.validators.get(aid, default_validator)(aid, value)

    def add_issuer(self, iid: str, rng: Rng,
                   attribute_source: Callable[..., list[str]] | None = None) -> Issuer:
        check_id(iid)
        key = self.directory.register(iid, rng)
        issuer = Issuer(iid, key, attribute_source or default_attributes)
        self.issuers[iid] = issuer
        return issuer

    def add_rp(self, rid: str) -> RelyingParty:
        check_id(rid)
        return self.rps.setdefault(rid, RelyingParty(rid))


def default_attributes(iid: str, uid: str, cid: CredentialId, aids) -> list[str]:
    return [f"{aid}-{H(iid.encode(), uid.encode(), cid.id, aid.encode()).hex()[:12]}" for aid in aids]


def entry_digest(cid: CredentialId, stored: StoredCredential) -> bytes:
    return stored.digest(cid)


def fold(digests) -> bytes:
    h = ZERO_DIGEST
    for d in digests:
        h = H(h, d)
    return h


# -- routines -------------------------------------------------------------------


def initialise(dep: Deployment, uid: str, pin: int, rng: Rng) -> User:
    check_id(uid)
    ams = dep.ams
    if uid in ams.sign_servers:
        raise DuplicateUser(uid)
    cfg = dep.config
    client, server, pk = tsign.keygen(uid, pin, cfg.L, cfg.T0, rng.fork("tsign"), cfg.suite)
    dc, ds = tdec.keygen(uid, rng.fork("tdec"), cfg.suite)
    ams.sign_servers[uid] = server
    ams.dec_servers[uid] = ds
    ams.db.setdefault(uid, [])
    dep.user_keys[uid] = (pk, dc.pk)
    user = User(uid, client, dc)
    dep.users[uid] = user
    with dep.bus.routine("Initialise"):
        dep.bus.open(user.name, AMS, {"uid": uid})
    return user


def _request(dep: Deployment, user: User, tag, m: bytes, pin: int, rng: Rng, view: dict,
             extra: tuple = ()) -> bytes:
    """Threshold-sign m, hand (sigma, m) to the support server and let it check."""
    ams = dep.ams
    try:
        sigma = tsign.sign(user.share, ams.sign_servers[user.uid], m, pin, rng.fork("tsign"),
                           bus=dep.bus, parties=(user.name, AMS))
    except (tsign.SignError, tsign.InvalidPin) as e:
        ams.record(tag, user.uid, {}, status=f"auth-failed:{type(e).__name__}")
        raise AuthFail(type(e).__name__) from e
    dep.bus.send(user.name, AMS, "request", canon(sigma, m, *extra), {"sig": sigma, **view})
    if not rsa_verify(dep.user_keys[user.uid][0], m, sigma):
        ams.record(tag, user.uid, {}, status="bad-signature")
        raise AuthFail("request signature")
    return sigma


def _decrypt(dep: Deployment, user: User, c: Ciphertext, rng: Rng) -> Opening:
    return tdec.decrypt(user.dec, dep.ams.dec_servers[user.uid], c, rng, bus=dep.bus,
                        parties=(user.name, AMS))


def issue(dep: Deployment, user: User, issuer: Issuer, aids, pin: int, rng: Rng,
          sid: int = 0) -> CredentialId:
    aids = tuple(aids)
    for a in aids:
        check_id(a)
    if len(set(aids)) != len(aids) or RESERVED & set(aids):
        raise ValueError("attribute ids must be distinct and not reserved")
    bus, ams, reg = dep.bus, dep.ams, dep.registry
    uid, iid = user.uid, issuer.iid
    U, I = user.name, issuer.name
    pk, pk_c = dep.user_keys[uid]
    staged_tokens: list[bytes] = []
    rec = None
    with bus.routine("Issue", sid):
        try:
            bus.open(U, AMS, {"tag": int(TAG_ISSUE), "uid": uid})
            id_cid = rng.fork("id_cid").bytes(CID_BYTES)
            m = canon(TAG_ISSUE, id_cid, uid, aids, iid)
            c_rev_r, _ = tdec.encrypt(pk_c, rng.fork("rev_r").bytes(32), rng.fork("enc_rev_r"))
            sigma_req = _request(dep, user, TAG_ISSUE, m, pin, rng,
                                 {"id_cid": id_cid, "uid": uid, "aids": aids, "iid": iid, "c_rev_r": c_rev_r.to_bytes()},
                                 extra=(c_rev_r,))
            rec = ams.record(TAG_ISSUE, uid, {"id_cid": id_cid, "aids": aids, "iid": iid})
            ams.captured.append((uid, id_cid, aids, sigma_req, c_rev_r, iid))
            bus.send(AMS, U, "issuer-auth", canon(iid), {"iid": iid})
            bus.send(AMS, I, "forward", canon(id_cid, uid, aids, sigma_req, c_rev_r),
                     {"id_cid": id_cid, "uid": uid, "aids": aids, "sig": sigma_req, "c_rev_r": c_rev_r.to_bytes()})
            cid = issuer_accept(dep, issuer, uid, id_cid, aids, sigma_req)

            rev_U = reg.issue_token(U, U, rng.fork("rev_U"))
            staged_tokens.append(rev_U)
            bus.send(U, I, "rev_U", rev_U, {"x": rev_U})
            rev_I = reg.issue_token(U, I, rng.fork("rev_I"))
            staged_tokens.append(rev_I)

            cred, sigma_cred, atrs = issuer_compose(dep, issuer, uid, cid, aids, rev_I, rev_U, rng.fork("compose"))
            view = {"cred": cred.fingerprint(), "sigma_cred": sigma_cred}
            bus.send(I, AMS, "cred", canon(cred, sigma_cred), view)
            if not dep.directory.verify_raw(iid, cred.wire(), sigma_cred):
                raise BadIssuerSig(iid)
            bus.send(AMS, U, "cred", canon(cred, sigma_cred), view)

            server = ams.dec_servers[uid]
            server.allow(len(cred.entries))
            drng = rng.fork("dec")
            try:
                got = _decrypt(dep, user, cred.slot(REV), drng).m
                if got != canon(rev_I, rev_U):
                    raise RevMismatch(str(cid))
                pk_open = _decrypt(dep, user, cred.slot(PK_BINDING), drng)
                if pk_open.m != pk.to_bytes():
                    raise MalformedAttribute(PK_BINDING)
                for a in aids:
                    val = _decrypt(dep, user, cred.slot(a), drng).m
                    try:
                        ok = dep.valid(a, val.decode())
                    except UnicodeDecodeError:
                        ok = False
                    if not ok:
                        raise MalformedAttribute(a)
            except tdec.TagMismatch as e:
                raise MalformedAttribute("tag") from e
            finally:
                server.close()
            if tuple(a for a, _ in cred.entries) != (PK_BINDING, *aids, REV):
                raise MalformedAttribute("layout")

            bus.send(U, AMS, "accept", b"\x01", {"accept": True})
        except Exception as e:
            for x in staged_tokens:
                reg.withdraw(x)
            if rec is not None:
                rec.status = f"aborted:{type(e).__name__}"
            raise
        stored = StoredCredential(cred, sigma_cred, c_rev_r)
        ams.db.setdefault(uid, []).append(AmsEntry(cid, stored, ams.now))
        issuer.db[cid] = rev_I
        user.db[cid] = stored
        user.h_cred = H(user.h_cred, entry_digest(cid, stored))
        user.pk_keys[cid] = pk_open.k
        bus.send(I, I, "local", 0, {"id_cid": cid.id, "cred": cred.fingerprint(), "sigma_cred": sigma_cred,
                                    "aids": aids, "atrs": atrs, "rev_I": rev_I}, metered=False)
    return cid


def issuer_accept(dep: Deployment, issuer: Issuer, uid: str, id_cid: bytes, aids, sigma_req: bytes) -> CredentialId:
    """Issuer side of the request check: user signature and cID freshness."""
    m = canon(TAG_ISSUE, id_cid, uid, tuple(aids), issuer.iid)
    if uid not in dep.user_keys or not rsa_verify(dep.user_keys[uid][0], m, sigma_req):
        raise AuthFail("issuer rejected request signature")
    cid = CredentialId(id_cid, summary(uid, aids, issuer.iid))
    if cid in issuer.seen:
        raise StaleCid(str(cid))
    issuer.seen.add(cid)
    return cid


def issuer_compose(dep: Deployment, issuer: Issuer, uid: str, cid: CredentialId, aids,
                   rev_I: bytes, rev_U: bytes, rng: Rng) -> tuple[Credential, bytes, tuple[str, ...]]:
    atrs = list(issuer.attribute_source(issuer.iid, uid, cid, tuple(aids)))
    if len(atrs) != len(aids):
        raise MalformedAttribute("attribute count")
    if not issuer.skip_validation:
        for a, v in zip(aids, atrs):
            if not dep.valid(a, v):
                raise MalformedAttribute(a)
    pk, pk_c = dep.user_keys[uid]
    entries = [(PK_BINDING, tdec.encrypt(pk_c, pk.to_bytes(), rng.fork("c0"))[0])]
    for i, (a, v) in enumerate(zip(aids, atrs)):
        entries.append((a, tdec.encrypt(pk_c, v.encode(), rng.fork(f"c{i + 1}"))[0]))
    entries.append((REV, tdec.encrypt(pk_c, canon(rev_I, rev_U), rng.fork("crev"))[0]))
    cred = Credential(tuple(entries))
    return cred, dep.directory.sign(issuer.key, cred.wire()), tuple(atrs)


def get_cids(dep: Deployment, user: User, pin: int, rng: Rng, sid: int = 0) -> list[CredentialId]:
    bus, ams = dep.bus, dep.ams
    uid = user.uid
    with bus.routine("GetCreds", sid):
        bus.open(user.name, AMS, {"tag": int(TAG_CIDS), "uid": uid})
        m = canon(TAG_CIDS, uid)
        _request(dep, user, TAG_CIDS, m, pin, rng, {"uid": uid})
        ams.record(TAG_CIDS, uid, {})
        entries = ams.backup(uid)
        anchors = list(ams.reanchors.get(uid, []))
        payload = canon(tuple(canon(e.cid, e.stored.cred, e.stored.sigma, e.stored.c_rev_r) for e in entries),
                        tuple(a.wire() for a in anchors))
        bus.send(AMS, user.name, "backup", payload,
                 {"cids": tuple(e.cid.id for e in entries),
                  "creds": tuple(e.stored.cred.fingerprint() for e in entries)})

        seq = [entry_digest(e.cid, e.stored) for e in entries]
        fresh = sorted((a for a in anchors if a.epoch > user.anchor_epoch), key=lambda a: a.epoch)
        for a in fresh:
            if a.uid != uid or not rsa_verify(ams.key.public, a.body(), a.signature):
                raise DigestMismatch("bad re-anchor record")
        full = list(seq)
        for a in reversed(fresh):
            for pos, d in a.removed:
                if pos > len(full):
                    raise DigestMismatch("re-anchor position out of range")
                full.insert(pos, d)
        if fold(full) != user.h_cred:
            raise DigestMismatch(uid)
        if len({e.cid for e in entries}) != len(entries):
            raise DigestMismatch("duplicate entry")
        user.db = {e.cid: e.stored for e in entries}
        if fresh:
            user.h_cred = fold(seq)
            user.anchor_epoch = fresh[-1].epoch
    return [e.cid for e in entries]


def _rev_tokens(dep: Deployment, user: User, stored: StoredCredential, rng: Rng) -> tuple[bytes, bytes, bytes]:
    op = _decrypt(dep, user, stored.cred.slot(REV), rng)
    r = Reader(op.m)
    rev_I, rev_U = r.bytes(), r.bytes()
    return rev_I, rev_U, op.k


def revoke_by_user(dep: Deployment, user: User, cid: CredentialId, pin: int, rng: Rng,
                   sid: int = 0) -> RevocationReceipt:
    if cid not in user.db:
        raise UnknownCid(str(cid))
    bus, ams = dep.bus, dep.ams
    uid = user.uid
    stored = user.db[cid]
    with bus.routine("RevokeU", sid):
        bus.open(user.name, AMS, {"tag": int(TAG_REV), "uid": uid})
        c_cid, _ = tdec.encrypt(user.dec.pk, cid.wire(), rng.fork("c_cid"))
        m = canon(TAG_REV, uid, c_cid)
        _request(dep, user, TAG_REV, m, pin, rng, {"uid": uid, "c_cid": c_cid.to_bytes()})
        rec = ams.record(TAG_REV, uid, {"c_cid": c_cid, "by": "user"})
        server = ams.dec_servers[uid]
        server.allow(1)
        try:
            _, rev_U, _ = _rev_tokens(dep, user, stored, rng.fork("dec"))
        except tdec.DecryptError:
            rec.status = "aborted"
            raise
        finally:
            server.close()
        try:
            receipt = dep.registry.revoke(user.name, rev_U, sid)
        except NotRevoker:
            rec.status = "aborted:NotRevoker"
            raise
        user.receipts.append(receipt)
    return receipt


def revoke_by_issuer(dep: Deployment, issuer: Issuer, cid: CredentialId, rng: Rng,
                     sid: int = 0) -> RevocationReceipt:
    if cid not in issuer.db:
        raise UnknownCid(str(cid))
    bus, ams = dep.bus, dep.ams
    uid, _, _ = parse_summary(cid.summary)
    with bus.routine("RevokeI", sid):
        bus.open(issuer.name, AMS, {"tag": int(TAG_REV), "iid": issuer.iid})
        c_cid, _ = tdec.encrypt(dep.user_keys[uid][1], cid.wire(), rng.fork("c_cid"))
        m = canon(TAG_REV, issuer.iid, c_cid)
        sigma = dep.directory.sign(issuer.key, m)
        bus.send(issuer.name, AMS, "request", canon(uid, m, sigma),
                 {"uid": uid, "iid": issuer.iid, "c_cid": c_cid.to_bytes(), "sig": sigma})
        try:
            ok = dep.directory.verify_raw(issuer.iid, m, sigma)
        except UnknownIssuer:
            ok = False
        if not ok:
            ams.record(TAG_REV, uid, {"iid": issuer.iid}, status="bad-signature")
            raise BadSig(issuer.iid)
        ams.record(TAG_REV, uid, {"c_cid": c_cid, "by": "issuer", "iid": issuer.iid})
        receipt = dep.registry.revoke(issuer.name, issuer.db[cid], sid)
        issuer.receipts.append(receipt)
    return receipt


def present(dep: Deployment, user: User, cid: CredentialId, aids_dscl, pin: int, rng: Rng,
            sid: int = 0) -> Presentation:
    aids_dscl = tuple(aids_dscl)
    if cid not in user.db:
        raise UnknownCid(str(cid))
    stored = user.db[cid]
    if len(set(aids_dscl)) != len(aids_dscl) or not set(aids_dscl) <= set(stored.cred.aids):
        raise BadSubset(str(aids_dscl))
    bus, ams = dep.bus, dep.ams
    uid = user.uid
    _, iid, _ = parse_summary(cid.summary)
    with bus.routine("Present", sid):
        bus.open(user.name, AMS, {"tag": int(TAG_PRES), "uid": uid})
        c_cid, _ = tdec.encrypt(user.dec.pk, canon(cid, aids_dscl), rng.fork("c_cid"))
        m = canon(TAG_PRES, uid, len(aids_dscl), c_cid)
        _request(dep, user, TAG_PRES, m, pin, rng, {"uid": uid, "n_dscl": len(aids_dscl), "c_cid": c_cid.to_bytes()})
        rec = ams.record(TAG_PRES, uid, {"n_dscl": len(aids_dscl), "c_cid": c_cid})
        server = ams.dec_servers[uid]
        k_pk = user.pk_keys.get(cid)
        server.allow(1 + len(aids_dscl) + (k_pk is None))
        drng = rng.fork("dec")
        try:
            rev_I, rev_U, k_rev = _rev_tokens(dep, user, stored, drng)
            b_I, b_U = dep.registry.unotify(user.name, [rev_I, rev_U])
            # Decrypt even when revoked so the server cannot tell the difference.
            opened = [_decrypt(dep, user, stored.cred.slot(a), drng) for a in aids_dscl]
            if k_pk is None:
                k_pk = _decrypt(dep, user, stored.cred.slot(PK_BINDING), drng).k
                user.pk_keys[cid] = k_pk
        except tdec.DecryptError:
            rec.status = "aborted"
            raise
        finally:
            server.close()
        if b_I or b_U:
            raise Revoked(str(cid))
    pres = Presentation(aids_dscl, tuple(o.m.decode() for o in opened), iid)
    user.presentations[(cid, aids_dscl)] = PresentationSecrets(
        pres, stored.cred, stored.sigma, (rev_I, rev_U), k_rev, k_pk, tuple(o.k for o in opened))
    return pres


def verify(dep: Deployment, user: User, rp: RelyingParty, cid: CredentialId, aids_dscl, pres: Presentation,
           pin: int, rng: Rng, sid: int = 0) -> tuple[bytes, VerifyResult]:
    """Prove a previous presentation to rp. Returns the challenge and rp's verdict."""
    aids_dscl = tuple(aids_dscl)
    secrets = user.presentations.get((cid, aids_dscl))
    if secrets is None or secrets.pres != pres:
        raise UnknownPresentation(str(cid))
    bus = dep.bus
    uid = user.uid
    with bus.routine("Verify", sid):
        if rp.name not in dep.registry.snapshots:
            dep.registry.vnotify(rp.name)
        bus.open(user.name, rp.name, {"tag": int(TAG_VERIFY), "uid": uid})
        ch = rp.challenge(rng.fork("challenge"))
        bus.send(rp.name, user.name, "challenge", ch, {"ch": ch})
        bus.open(user.name, AMS, {"tag": int(TAG_VERIFY), "uid": uid})
        m = presentation_message(pres.aids, pres.atrs, pres.iid, secrets.cred, secrets.sigma_cred, ch)
        try:
            sigma_pres = tsign.sign(user.share, dep.ams.sign_servers[uid], m, pin, rng.fork("tsign"), blind=True,
                                    bus=bus, parties=(user.name, AMS))
        except (tsign.SignError, tsign.InvalidPin) as e:
            raise AuthFail(type(e).__name__) from e
        bundle = PresentationBundle(uid, secrets.cred, secrets.sigma_cred, pres.aids, pres.atrs, pres.iid,
                                    secrets.rev, sigma_pres, ch, dep.user_keys[uid][0].to_bytes(),
                                    secrets.k_rev, secrets.k_pk, secrets.ks)
        bus.send(user.name, rp.name, "bundle", bundle.wire(), bundle.view())
        rp.received.append(bundle)
        result = rp_check(dep, rp, bundle, user.name)
        bus.send(rp.name, rp.name, "local", 0, {"verdict": result.verdict}, metered=False)
    return ch, result


def replay_bundle(dep: Deployment, rp: RelyingParty, bundle: PresentationBundle, sender: str,
                  sid: int = 0) -> VerifyResult:
    """Deliver a previously seen bundle to rp again (adversary hook)."""
    with dep.bus.routine("Verify", sid):
        dep.bus.send(sender, rp.name, "bundle", bundle.wire(), bundle.view())
        return rp_check(dep, rp, bundle, sender)


def rp_check(dep: Deployment, rp: RelyingParty, b: PresentationBundle, user_name: str) -> VerifyResult:
    if b.ch not in rp.outstanding:
        raise StaleChallenge(b.ch.hex()[:16])
    rp.outstanding.discard(b.ch)
    rp.retired.add(b.ch)
    try:
        if not dep.directory.verify_raw(b.iid, b.cred.wire(), b.sigma_cred):
            return VerifyResult(0, "issuer-signature")
    except UnknownIssuer:
        return VerifyResult(0, "unknown-issuer")
    if len(b.aids) != len(b.atrs) or len(b.ks) != len(b.aids) or not set(b.aids) <= set(b.cred.aids):
        return VerifyResult(0, "subset")
    if not tdec.verify_decryption(b.cred.slot(PK_BINDING), Opening(b.pk, b.k_pk)):
        return VerifyResult(0, "pk-binding")
    try:
        pk = RsaPublicKey.from_bytes(b.pk)
    except ValueError:
        return VerifyResult(0, "pk-binding")
    m = presentation_message(b.aids, b.atrs, b.iid, b.cred, b.sigma_cred, b.ch)
    if not rsa_verify(pk, m, b.sigma_pres):
        return VerifyResult(0, "presentation-signature")
    if not tdec.verify_decryption(b.cred.slot(REV), Opening(canon(*b.rev), b.k_rev)):
        return VerifyResult(0, "rev-binding")
    try:
        fresh = [dep.registry.verify_token(user_name, rp.name, x) for x in b.rev]
    except NoSnapshot:
        return VerifyResult(0, "no-snapshot")
    if not all(fresh):
        return VerifyResult(0, "revoked")
    for a, v, k in zip(b.aids, b.atrs, b.ks):
        if not tdec.verify_decryption(b.cred.slot(a), Opening(v.encode(), k)):
            return VerifyResult(0, f"attribute:{a}")
    return VerifyResult(1)


def expire(dep: Deployment, now: int) -> int:
    """Archive backups and revocations older than delta. Returns how many moved."""
    ams = dep.ams
    ams.now = dep.registry.now = now
    moved = 0
    for uid, entries in ams.db.items():
        keep, removed = [], []
        for pos, e in enumerate(entries):
            if now - e.stored_at > ams.delta:
                removed.append((pos, entry_digest(e.cid, e.stored)))
                ams.archive.setdefault(uid, []).append(e)
            else:
                keep.append(e)
        if removed:
            anchors = ams.reanchors.setdefault(uid, [])
            epoch = anchors[-1].epoch + 1 if anchors else 1
            body = ReAnchor(uid, epoch, tuple(removed), b"").body()
            anchors.append(ReAnchor(uid, epoch, tuple(removed), rsa_sign(ams.key, body)))
            ams.db[uid] = keep
            moved += len(removed)
    return moved + len(dep.registry.expire(now, ams.delta))


def read_log(dep: Deployment, uid: str) -> list[LogEntry]:
    """Audit view of a user's log. Needs both decryption halves, so it is a user-side tool."""
    ams = dep.ams
    client, server = dep.users[uid].dec, ams.dec_servers[uid]
    out = []
    for rec in ams.log:
        if rec.uid != uid or rec.status != "ok":
            continue
        f = rec.fields
        if rec.tag == TAG_ISSUE:
            cid = CredentialId(f["id_cid"], summary(uid, f["aids"], f["iid"]))
            out.append(LogEntry(rec.time, "issue", {"cid": cid}))
        elif rec.tag == TAG_CIDS:
            out.append(LogEntry(rec.time, "get_cids", {}))
        elif rec.tag == TAG_REV:
            cid = CredentialId.read(Reader(tdec.decrypt_with_key(client, server, f["c_cid"]).m))
            who = uid if f["by"] == "user" else f["iid"]
            out.append(LogEntry(rec.time, "revoke", {"cid": cid, "revoker": who}))
        elif rec.tag == TAG_PRES:
            r = Reader(tdec.decrypt_with_key(client, server, f["c_cid"]).m)
            cid = CredentialId.read(r)
            aids = tuple(r.str() for _ in range(r.count()))
            out.append(LogEntry(rec.time, "present", {"cid": cid, "aids": aids}))
    return out
