"""Scenario driver: runs one script against the real parties and the ideal model.

A script is a list of events (plain dicts, see ``scenario.schema.json``).
``run_scenario`` feeds every event to both worlds with the same per-event
randomness and returns the two normalized output streams, the real
transcript and the revocation registry's leak log.

The ideal side is ``IdealSystem`` driven by ``Simulator``, the canonical
adversary. It picks cIDs and challenges from the same random streams the real
parties use, mirrors each user's signing service with a ``TsignOracle``, and
turns network drops into withheld approvals using a static map of which
channels every routine uses before and after it commits.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import parties as P
from . import split_decrypt as tdec
from . import split_sign as tsign
from .crypto_suite import H, Rng, Suite
from .ideal_model import IGNORED, Adversary, IdealSystem, TdecOracle, TsignOracle, canonical_cid
from .revocation import REGISTRY, RevocationError
from .wire import Bus, Dropped, Reader

AIDS = ("age", "name", "nationality", "email", "degree")
RPS = ("shop", "bank", "bar")
PROBE = b"pin-probe"
OPS = ("init_user", "register_issuer", "issue", "get_cids", "revoke_user", "revoke_issuer", "present",
       "verify", "vnotify", "tick", "corrupt", "clone_memory", "guess_pin", "adv_request", "adv_decrypt",
       "tamper", "drop_next", "replay_verify", "replay_issue")
FAILURES = (P.ProtocolError, Dropped, RevocationError, tsign.SignError, tsign.InvalidPin, tdec.DecryptError)


class ScriptError(Exception):
    def __init__(self, index: int, msg: str):
        super().__init__(f"event {index}: {msg}")
        self.index = index


def attribute_values(iid: str, uid: str, cid: P.CredentialId, aids) -> list[str]:
    """Environment's attribute source, shared by both worlds."""
    return [f"{aid}={H(iid.encode(), uid.encode(), cid.id, aid.encode()).hex()[:10]}" for aid in aids]


def missing_cid(label: str) -> P.CredentialId:
    return P.CredentialId(bytes(P.CID_BYTES), f"?:?:{label}")


@dataclass
class Clone:
    user: P.User
    pin: int | None = None


@dataclass
class RunResult:
    real: list[tuple]
    ideal: list[tuple]
    transcript: Bus
    leak_log: list[dict]
    ideal_leaks: list[tuple]
    errors: dict[int, str]
    world: "RealWorld"
    ideal_world: IdealSystem
    simulator: "Simulator"
    sids: dict[int, str] = field(default_factory=dict)  # sid -> op

    def mismatches(self) -> list[tuple]:
        """Pairs of differing outputs. Adversary decryptions only need real to be no stronger."""
        out = []
        for r, i in zip(self.real, self.ideal):
            if r[2] == "decrypt" and r[3] is None:
                continue
            if r != i:
                out.append((r, i))
        if len(self.real) != len(self.ideal):
            out.append(("length", len(self.real), len(self.ideal)))
        return out


# -- real world -----------------------------------------------------------------------


class RealWorld:
    def __init__(self, config: P.Config, rng: Rng):
        self.bus = Bus()
        self.dep = P.Deployment(config, rng.fork("deployment"), self.bus)
        self.creds: dict[str, P.CredentialId] = {}
        self.pres: dict[str, tuple[str, P.CredentialId, tuple, P.Presentation]] = {}
        self.verifies: dict[str, tuple[str, P.PresentationBundle]] = {}
        self.pins: dict[str, int] = {}
        self.clones: dict[str, Clone] = {}
        self.level: dict[str, int] = {}
        self.corrupted: set[str] = set()
        self.now = 0

    def cid(self, label: str) -> P.CredentialId:
        return self.creds.get(label) or missing_cid(label)

    def rp(self, name: str) -> P.RelyingParty:
        return self.dep.rps.get(name) or self.dep.add_rp(name)

    def tokens_of(self, cid: P.CredentialId) -> list[bytes]:
        """Omniscient lookup used by tamper hooks."""
        uid, _, _ = P.parse_summary(cid.summary)
        user = self.dep.users[uid]
        stored = user.db.get(cid)
        if stored is None:
            return []
        op = tdec.decrypt_with_key(user.dec, self.dep.ams.dec_servers[uid], stored.cred.slot(P.REV))
        r = Reader(op.m)
        return [r.bytes(), r.bytes()]


# -- canonical simulator ---------------------------------------------------------------


# Droppable channels each routine uses, by role, split by where they fall:
# before the user's signing session, after it, and after the routine commits.
# Channels between the user and the support server are never dropped by the
# script generator: a lost signing response desynchronizes the clone chain.
def _channels(routine: str, u: str, other: str, rp_has_snapshot: bool = True) -> dict[str, list]:
    F, A = REGISTRY, P.AMS
    if routine == "Issue":
        return {"pre": [], "post": [(A, other), (u, F), (F, u), (u, other), (other, F), (F, other), (other, A)],
                "commit": []}
    if routine == "RevokeU":
        return {"pre": [], "post": [(u, F)], "commit": [(F, u)]}
    if routine == "RevokeI":
        return {"pre": [(other, A), (other, F)], "post": [], "commit": [(F, other)]}
    if routine == "Present":
        return {"pre": [], "post": [(u, F), (F, u)], "commit": []}
    if routine == "Verify":
        pre = [] if rp_has_snapshot else [(other, F), (F, other)]
        return {"pre": pre + [(u, other), (other, u)],
                "post": [(u, other), (u, F), (other, F), (F, other), (F, u)], "commit": []}
    if routine == "DBupdate":
        return {"pre": [(other, F), (F, other)], "post": [], "commit": []}
    return {"pre": [], "post": [], "commit": []}


@dataclass
class EventContext:
    rng: Rng
    routine: str = ""
    user: str = ""
    other: str = ""  # issuer or RP bus name
    pin: int | None = None
    silent: bool = False
    n_dec: int = 0


class Simulator(Adversary):
    def __init__(self, L: int, T0: int):
        self.L, self.T0 = L, T0
        self.tsign: dict[str, TsignOracle] = {}
        self.tdec: dict[str, TdecOracle] = {}
        self.pending: list[tuple[str, str]] = []
        self.snapshots: set[str] = set()
        self.backup_tamper: dict | None = None
        self.bad_issuers: set[str] = set()
        self.ctx = EventContext(Rng(0))
        self.withhold = False
        self.ideal: IdealSystem | None = None
        self.sign_sessions = 0

    # helpers

    def _drop(self, channels) -> bool:
        # channels are listed in the order the routine first uses them
        for ch in channels:
            if ch in self.pending:
                self.pending.remove(ch)
                return True
        return False

    def _phase(self, name: str) -> bool:
        """True when a pending drop hits a channel used in this phase."""
        c = self.ctx
        uname = f"U:{c.user}"
        chans = _channels(c.routine, uname, c.other, c.other in self.snapshots)
        if name == "commit" and self._drop(chans["commit"]):
            self.withhold = True
            return False
        return self._drop(chans[name]) if name != "commit" else False

    def _sign(self) -> bool:
        c = self.ctx
        if c.silent:
            return True  # already authenticated
        self.sign_sessions += 1
        return self.tsign[c.user].sign_honest(b"%d" % self.sign_sessions, c.pin, b"sig") is not None

    def _flow(self, uses_sign: bool = True) -> bool:
        if self._phase("pre"):
            return False
        if uses_sign and not self._sign():
            return False
        if self._phase("post"):
            return False
        self._phase("commit")
        return True

    # approval points

    def issue_ok(self, sid, user, issuer, aids):
        if not self._flow():
            return None
        return canonical_cid(self.ctx.rng.fork("id_cid").bytes(P.CID_BYTES), user, aids, issuer)

    def atr_ok(self, sid):
        issuer = self.ctx.other[2:]
        if issuer in self.bad_issuers:
            self.bad_issuers.discard(issuer)
            return False
        return True

    def getcids_ok(self, sid, user):
        if not self._flow():
            return False
        t = self.backup_tamper
        if t is not None:
            self.backup_tamper = None
            n = sum(1 for row in self.ideal.T_a.values() if row.user == user)
            if n >= 1 and (t["mutation"] != "reorder" or n >= 2):
                return False
        return True

    def revoke_ok(self, sid, party):
        return self._flow(uses_sign=self.ctx.routine == "RevokeU")

    def present_ok(self, sid, user):
        if self.ctx.silent:
            for _ in range(self.ctx.n_dec):
                self.tdec[user].decrypt_corrupted_client(None)
        return self._flow()

    def verify_ok(self, sid, user, rp):
        c = self.ctx
        if self._phase("pre"):
            self.snapshots.add(c.other)
            return None
        self.snapshots.add(c.other)
        if not self._sign() or self._phase("post"):
            return None
        return c.rng.fork("challenge").bytes(P.CH_BYTES)

    def auth_ok(self, sid, user):
        ts = self.tsign[user]
        before = ts.c_C
        ok = ts.sign_adversary(self.ctx.pin)
        if ok and before == 1 and ts.c_C == 2 and self.ideal.c.get(user) == 1:
            self.ideal.corrupt_user(user)
        return ok


# -- driver ----------------------------------------------------------------------------


def _need(ev: dict, i: int, *keys: str) -> None:
    for k in keys:
        if k not in ev:
            raise ScriptError(i, f"{ev.get('op')} needs '{k}'")


def run_scenario(script: list[dict], seed: int, config: P.Config | None = None) -> RunResult:
    config = config or P.Config(suite=Suite.test())
    root = Rng(seed)
    real = RealWorld(config, root.fork("real"))
    sim = Simulator(config.L, config.T0)
    ideal = IdealSystem(sim, attribute_values)
    sim.ideal = ideal
    ideal_creds: dict[str, P.CredentialId] = {}
    ideal_pres: dict[str, tuple[str, P.Presentation]] = {}
    out_r: list[tuple] = []
    out_i: list[tuple] = []
    errors: dict[int, str] = {}
    sids: dict[int, str] = {}
    roles: dict[str, str] = {}

    def role(i: int, name: str, kind: str) -> None:
        if roles.setdefault(name, kind) != kind:
            raise ScriptError(i, f"name {name!r} already used as {roles[name]}")

    def user_of(i: int, ev: dict) -> P.User:
        _need(ev, i, "user")
        u = real.dep.users.get(ev["user"])
        if u is None:
            raise ScriptError(i, f"unknown user {ev['user']!r}")
        return u

    def issuer_of(i: int, ev: dict) -> P.Issuer:
        _need(ev, i, "issuer")
        iss = real.dep.issuers.get(ev["issuer"])
        if iss is None:
            raise ScriptError(i, f"unknown issuer {ev['issuer']!r}")
        return iss

    def attempt(i: int, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except FAILURES as e:
            errors[i] = type(e).__name__
            return None

    labels: set[str] = set()
    for i, ev in enumerate(script):
        if not isinstance(ev, dict) or ev.get("op") not in OPS:
            raise ScriptError(i, f"unknown event {ev!r}")
        op = ev["op"]
        rng = root.fork(f"event/{i}")
        sid = i + 1
        sids[sid] = op
        if "as" in ev:
            if ev["as"] in labels:
                raise ScriptError(i, f"label {ev['as']!r} already used")
            labels.add(ev["as"])
        sim.ctx = EventContext(rng)
        sim.withhold = False
        real.dep.ams.now = real.dep.registry.now = real.now

        if op == "init_user":
            _need(ev, i, "user", "pin")
            uid, pin = ev["user"], ev["pin"]
            role(i, uid, "user")
            if uid in real.dep.users:
                raise ScriptError(i, f"user {uid!r} already initialised")
            if not 0 <= pin < config.L:
                raise ScriptError(i, "PIN out of range")
            user = P.initialise(real.dep, uid, pin, rng.fork("keys"))
            real.pins[uid] = pin
            real.level.setdefault(uid, 0)
            ideal.setup_user(uid)
            ts = TsignOracle()
            if uid in sim.tsign:  # corrupted from the start
                ts = sim.tsign[uid]
            ts.keygen(user.share.pk, config.L, pin, config.T0)
            sim.tsign[uid] = ts
            sim.tdec[uid] = TdecOracle()

        elif op == "register_issuer":
            _need(ev, i, "issuer")
            role(i, ev["issuer"], "issuer")
            if ev["issuer"] in real.dep.issuers:
                raise ScriptError(i, f"issuer {ev['issuer']!r} already registered")
            real.dep.add_issuer(ev["issuer"], rng.fork("keys"), attribute_values)

        elif op == "issue":
            user, iss = user_of(i, ev), issuer_of(i, ev)
            _need(ev, i, "aids")
            aids = tuple(ev["aids"])
            pin = ev.get("pin", real.pins[user.uid])
            cid = attempt(i, P.issue, real.dep, user, iss, aids, pin, rng, sid=sid)
            if cid is not None and "as" in ev:
                real.creds[ev["as"]] = cid
            sim.ctx = EventContext(rng, "Issue", user.uid, iss.name, pin)
            icid = ideal.issue(sid, user.uid, aids, iss.iid)
            if icid is not None and "as" in ev:
                ideal_creds[ev["as"]] = icid
            for party in (user.name, iss.name):
                out_r.append((i, party, "issue-resp", cid))
                out_i.append((i, party, "issue-resp", icid))

        elif op == "get_cids":
            user = user_of(i, ev)
            pin = ev.get("pin", real.pins[user.uid])
            got = attempt(i, P.get_cids, real.dep, user, pin, rng, sid=sid)
            sim.ctx = EventContext(rng, "GetCreds", user.uid, "", pin)
            igot = ideal.get_cids(sid, user.uid)
            out_r.append((i, user.name, "getcids-resp", None if got is None else tuple(got)))
            out_i.append((i, user.name, "getcids-resp", None if igot is None else tuple(igot)))

        elif op == "revoke_user":
            user = user_of(i, ev)
            _need(ev, i, "cred")
            pin = ev.get("pin", real.pins[user.uid])
            rec = attempt(i, P.revoke_by_user, real.dep, user, real.cid(ev["cred"]), pin, rng, sid=sid)
            sim.ctx = EventContext(rng, "RevokeU", user.uid, "", pin)
            res = ideal.revoke(sid, user.uid, ideal_creds.get(ev["cred"]) or missing_cid(ev["cred"]))
            if sim.withhold:
                res = None
            out_r.append((i, user.name, "revoke-resp", None if rec is None else "ok"))
            out_i.append((i, user.name, "revoke-resp", res))

        elif op == "revoke_issuer":
            iss = issuer_of(i, ev)
            _need(ev, i, "cred")
            rec = attempt(i, P.revoke_by_issuer, real.dep, iss, real.cid(ev["cred"]), rng, sid=sid)
            sim.ctx = EventContext(rng, "RevokeI", "", iss.name)
            res = ideal.revoke(sid, iss.iid, ideal_creds.get(ev["cred"]) or missing_cid(ev["cred"]))
            if sim.withhold:
                res = None
            out_r.append((i, iss.name, "revoke-resp", None if rec is None else "ok"))
            out_i.append((i, iss.name, "revoke-resp", res))

        elif op == "present":
            user = user_of(i, ev)
            _need(ev, i, "cred", "aids")
            aids = tuple(ev["aids"])
            pin = ev.get("pin", real.pins[user.uid])
            cid = real.cid(ev["cred"])
            pres = attempt(i, P.present, real.dep, user, cid, aids, pin, rng, sid=sid)
            if pres is not None and "as" in ev:
                real.pres[ev["as"]] = (user.uid, cid, aids, pres)
            sim.ctx = EventContext(rng, "Present", user.uid, "", pin)
            ipres = ideal.present(sid, user.uid, ideal_creds.get(ev["cred"]) or missing_cid(ev["cred"]), aids)
            if ipres is not None and "as" in ev:
                ideal_pres[ev["as"]] = (user.uid, ipres)
            out_r.append((i, user.name, "present-resp", pres))
            out_i.append((i, user.name, "present-resp", ipres))

        elif op == "verify":
            user = user_of(i, ev)
            _need(ev, i, "rp", "pres")
            role(i, ev["rp"], "rp")
            rp = real.rp(ev["rp"])
            pin = ev.get("pin", real.pins[user.uid])
            got = None
            entry = real.pres.get(ev["pres"])
            if entry is None or entry[0] != user.uid:
                errors[i] = "UnknownPresentation"
            else:
                _, cid, aids, pres = entry
                res = attempt(i, P.verify, real.dep, user, rp, cid, aids, pres, pin, rng, sid=sid)
                if res is not None:
                    ch, verdict = res
                    got = ((pres, ch), verdict.verdict)
                    real.verifies[ev.get("as", f"#{i}")] = (rp.rid, rp.received[-1])
                    if verdict.verdict == 0:
                        errors[i] = f"verdict:{verdict.reason}"
            sim.ctx = EventContext(rng, "Verify", user.uid, rp.name, pin)
            ient = ideal_pres.get(ev["pres"])
            igot = None
            if ient is not None and ient[0] == user.uid:
                igot = ideal.verify(sid, user.uid, ient[1], ev["rp"])
            else:
                ideal.verify(sid, user.uid, P.Presentation((), (), "?"), ev["rp"])
            for party in (user.name, rp.name):
                out_r.append((i, party, "verify-resp", got))
                out_i.append((i, party, "verify-resp", igot))

        elif op == "vnotify":
            _need(ev, i, "rp")
            role(i, ev["rp"], "rp")
            rp = real.rp(ev["rp"])
            with real.bus.routine("DBupdate", sid):
                attempt(i, real.dep.registry.vnotify, rp.name)
            sim.ctx = EventContext(rng, "DBupdate", "", rp.name)
            sim._phase("pre")
            sim.snapshots.add(rp.name)

        elif op == "tick":
            _need(ev, i, "dt")
            real.now += int(ev["dt"])
            P.expire(real.dep, real.now)

        elif op == "corrupt":
            _need(ev, i, "party")
            party = ev["party"]
            if party == P.AMS:
                real.corrupted.add(P.AMS)
                ideal.corrupt_party(P.AMS)
                for ts in sim.tsign.values():
                    ts.corrupt_server()
            elif party.startswith("I:") or party.startswith("RP:"):
                real.corrupted.add(party)
                ideal.corrupt_party(party.split(":", 1)[1])
                if party.startswith("I:"):
                    real.dep.directory.corrupt(party[2:])
            elif party.startswith("U:"):
                uid = party[2:]
                level = ev.get("level", 3)
                if level == 3:
                    if uid in real.dep.users:
                        raise ScriptError(i, "level 3 only before init_user")
                    ideal.corrupt_party(uid, is_user=True)
                    real.level[uid] = 3
                    real.corrupted.add(party)
                    ts = TsignOracle()
                    ts.corrupt_client(3)
                    sim.tsign[uid] = ts
                elif level == 1:
                    _clone(i, real, ideal, sim, uid)
                elif level == 2:
                    if real.level.get(uid) != 1:
                        raise ScriptError(i, "level 2 needs level 1 first")
                    real.clones[uid].pin = real.pins[uid]
                    real.level[uid] = 2
                    sim.tsign[uid].c_C = 2
                    ideal.corrupt_user(uid)
                else:
                    raise ScriptError(i, f"bad level {level}")
            else:
                raise ScriptError(i, f"unknown party {party!r}")

        elif op == "clone_memory":
            _need(ev, i, "user")
            _clone(i, real, ideal, sim, ev["user"])

        elif op == "guess_pin":
            _need(ev, i, "user", "pin")
            uid = ev["user"]
            clone = real.clones.get(uid)
            if clone is None:
                raise ScriptError(i, "guess_pin needs clone_memory first")
            if clone.pin is not None:
                raise ScriptError(i, "PIN already known")
            ok = attempt(i, tsign.sign, clone.user.share, real.dep.ams.sign_servers[uid], PROBE, ev["pin"],
                         rng.fork("tsign"), bus=real.bus, parties=(clone.user.name, P.AMS)) is not None
            if ok:
                clone.pin = ev["pin"]
                real.level[uid] = 2
            sim.ctx = EventContext(rng, "", uid, "", ev["pin"], silent=True)
            iok = sim.auth_ok(sid, uid)
            out_r.append((i, "A", "guess-pin", ok))
            out_i.append((i, "A", "guess-pin", iok))

        elif op == "adv_request":
            _need(ev, i, "user", "routine")
            uid, routine = ev["user"], ev["routine"]
            clone = real.clones.get(uid)
            if clone is None:
                raise ScriptError(i, "adv_request needs clone_memory first")
            pin = clone.pin if clone.pin is not None else ev.get("pin", 0)
            sessions = real.dep.ams.sign_servers[uid].sessions
            inputs: dict[str, Any] = {}
            if routine == "issue":
                iss = issuer_of(i, ev)
                _need(ev, i, "aids")
                got = attempt(i, P.issue, real.dep, clone.user, iss, tuple(ev["aids"]), pin, rng, sid=sid)
                inputs = {"aids": tuple(ev["aids"]), "issuer": iss.iid}
                sim.ctx = EventContext(rng, "Issue", uid, iss.name, pin, silent=True)
            elif routine == "revoke":
                _need(ev, i, "cred")
                got = attempt(i, P.revoke_by_user, real.dep, clone.user, real.cid(ev["cred"]), pin, rng, sid=sid)
                got = None if got is None else "ok"
                inputs = {"cid": ideal_creds.get(ev["cred"]) or missing_cid(ev["cred"])}
                sim.ctx = EventContext(rng, "RevokeU", uid, "", pin, silent=True)
            elif routine == "present":
                _need(ev, i, "cred", "aids")
                got = attempt(i, P.present, real.dep, clone.user, real.cid(ev["cred"]), tuple(ev["aids"]), pin,
                              rng, sid=sid)
                inputs = {"cid": ideal_creds.get(ev["cred"]) or missing_cid(ev["cred"]), "aids": tuple(ev["aids"])}
                sim.ctx = EventContext(rng, "Present", uid, "", pin, silent=True, n_dec=1 + len(ev["aids"]))
            else:
                raise ScriptError(i, f"no adversary routine {routine!r}")
            if real.dep.ams.sign_servers[uid].sessions > sessions and clone.pin is None:
                clone.pin = pin
                real.level[uid] = 2
            res = ideal.silent_request(sid, routine, uid, inputs)
            if sim.withhold:
                res = None
            out_r.append((i, "A", routine, got))
            out_i.append((i, "A", routine, None if res == IGNORED else res))

        elif op == "adv_decrypt":
            _need(ev, i, "user", "cred")
            uid = ev["user"]
            clone = real.clones.get(uid)
            if clone is None:
                raise ScriptError(i, "adv_decrypt needs clone_memory first")
            stored = clone.user.db.get(real.cid(ev["cred"]))
            got = None
            if stored is not None:
                op_ = attempt(i, tdec.decrypt, clone.user.dec, real.dep.ams.dec_servers[uid],
                              stored.cred.slot(P.REV), rng, bus=real.bus, parties=(clone.user.name, P.AMS))
                got = None if op_ is None else op_.m
            oracle = sim.tdec[uid]
            m = oracle.silent_decrypt(lambda c: b"?", ("slot", ev["cred"]))
            out_r.append((i, "A", "decrypt", got))
            out_i.append((i, "A", "decrypt", None if m is None else got))

        elif op == "tamper":
            _need(ev, i, "target")
            _tamper(i, ev, real, sim)

        elif op == "drop_next":
            _need(ev, i, "sender", "receiver")
            real.bus.drop_next(ev["sender"], ev["receiver"])
            sim.pending.append((ev["sender"], ev["receiver"]))

        elif op == "replay_verify":
            _need(ev, i, "verify")
            cap = real.verifies.get(ev["verify"])
            if cap is None:
                raise ScriptError(i, f"no captured verify {ev['verify']!r}")
            rid, bundle = cap
            rp = real.rp(ev.get("rp", rid))
            got = attempt(i, P.replay_bundle, real.dep, rp, bundle, "A", sid=sid)
            out_r.append((i, rp.name, "replay", None if got is None else got.verdict))
            out_i.append((i, rp.name, "replay", None))

        elif op == "replay_issue":
            iss = issuer_of(i, ev)
            caps = [c for c in real.dep.ams.captured if c[5] == iss.iid]
            if not caps:
                raise ScriptError(i, "no captured issue request for this issuer")
            uid, id_cid, aids, sigma, _, _ = caps[-1]
            got = attempt(i, P.issuer_accept, real.dep, iss, uid, id_cid, aids, sigma)
            out_r.append((i, iss.name, "replay-issue", None if got is None else "accepted"))
            out_i.append((i, iss.name, "replay-issue", None))

    return RunResult(out_r, out_i, real.bus, real.dep.registry.leak_log, ideal.leaks, errors, real, ideal, sim,
                     sids)


def _clone(i: int, real: RealWorld, ideal: IdealSystem, sim: Simulator, uid: str) -> None:
    user = real.dep.users.get(uid)
    if user is None:
        raise ScriptError(i, f"unknown user {uid!r}")
    # Device memory only: the PIN is never stored on the device.
    real.clones[uid] = Clone(copy.deepcopy(user))
    if real.level.get(uid, 0) == 0:
        real.level[uid] = 1
        real.corrupted.add(user.name)
        ideal.corrupt_user(uid)
        sim.tsign[uid].corrupt_client(1)


def _tamper(i: int, ev: dict, real: RealWorld, sim: Simulator) -> None:
    target = ev["target"]
    if target == "backup":
        _need(ev, i, "mutation")
        t = {"mutation": ev["mutation"], "index": ev.get("index", 0)}
        real.dep.ams.tamper["backup"] = t
        sim.backup_tamper = t
    elif target == "snapshot":
        _need(ev, i, "rp", "cred")
        rp = real.rp(ev["rp"])
        for x in real.tokens_of(real.cid(ev["cred"])):
            real.dep.registry.tamper_hide(rp.name, x)
    elif target == "issuer_attribute":
        iss = real.dep.issuers.get(ev.get("issuer", ""))
        if iss is None:
            raise ScriptError(i, "unknown issuer")
        _need(ev, i, "aid", "value")
        honest = iss.attribute_source
        aid, value = ev["aid"], ev["value"]

        def source(iid, uid, cid, aids):
            iss.attribute_source = honest
            iss.skip_validation = False
            return [value if a == aid else v for a, v in zip(aids, honest(iid, uid, cid, aids))]

        iss.attribute_source = source
        iss.skip_validation = True
        sim.bad_issuers.add(iss.iid)
    else:
        raise ScriptError(i, f"unknown tamper target {target!r}")


# -- transcript export --------------------------------------------------------------------


def export_jsonl(result: RunResult, path: str | Path) -> None:
    with open(path, "w") as f:
        for m in result.transcript.messages:
            f.write(json.dumps(m.to_json(), sort_keys=True) + "\n")


def outputs_jsonable(outputs: list[tuple]) -> list:
    from .wire import _jsonable

    def conv(v):
        if isinstance(v, tuple):
            return [conv(x) for x in v]
        return _jsonable(v)

    return [[i, party, kind, conv(v)] for i, party, kind, v in outputs]


# -- random honest scripts ----------------------------------------------------------------


def random_honest_script(rng: Rng, max_events: int = 20, max_users: int = 5, max_issuers: int = 3,
                         drops: bool = True, wrong_pins: bool = True, ticks: bool = True) -> list[dict]:
    """Honest environment plus network drops. Verify always follows its present."""
    users = [f"u{k}" for k in range(rng.between(1, max_users))]
    issuers = [f"iss{k}" for k in range(rng.between(1, max_issuers))]
    pins = {u: rng.below(10_000) for u in users}
    script: list[dict] = [{"op": "init_user", "user": u, "pin": pins[u]} for u in users]
    script += [{"op": "register_issuer", "issuer": s} for s in issuers]
    creds: list[tuple[str, str, str, tuple]] = []  # label, user, issuer, aids
    n_pres = 0
    droppable = [(f"I:{s}", P.AMS) for s in issuers] + [(P.AMS, f"I:{s}") for s in issuers]
    droppable += [(f"U:{u}", REGISTRY) for u in users] + [(REGISTRY, f"U:{u}") for u in users]
    droppable += [(f"U:{u}", f"I:{s}") for u in users for s in issuers]
    droppable += [(f"RP:{r}", REGISTRY) for r in RPS] + [(REGISTRY, f"RP:{r}") for r in RPS]
    droppable += [(f"U:{u}", f"RP:{r}") for u in users for r in RPS] + [(f"RP:{r}", f"U:{u}") for u in users for r in RPS]

    def pin_for(u: str) -> dict:
        if wrong_pins and rng.below(20) == 0:
            return {"pin": (pins[u] + 1 + rng.below(9_999)) % 10_000}
        return {}

    kinds = ["issue"] * 5 + ["present"] * 5 + ["get_cids", "revoke_user", "revoke_issuer", "vnotify", "bogus"]
    if ticks:
        kinds.append("tick")
    if drops:
        kinds.append("drop")
    while len(script) < max_events:
        kind = rng.choice(kinds)
        u = rng.choice(users)
        if kind == "issue" or (not creds and kind in ("present", "revoke_user", "revoke_issuer")):
            s = rng.choice(issuers)
            aids = tuple(rng.sample(AIDS, rng.below(4)))
            label = f"c{len(creds)}"
            creds.append((label, u, s, aids))
            script.append({"op": "issue", "user": u, "issuer": s, "aids": list(aids), "as": label, **pin_for(u)})
        elif kind == "present":
            if len(script) > max_events - 2:
                break
            label, owner, _, aids = rng.choice(creds)
            dscl = rng.sample(aids, rng.below(len(aids) + 1))
            p = f"p{n_pres}"
            n_pres += 1
            script.append({"op": "present", "user": owner, "cred": label, "aids": dscl, "as": p, **pin_for(owner)})
            script.append({"op": "verify", "user": owner, "rp": rng.choice(RPS), "pres": p})
        elif kind == "get_cids":
            script.append({"op": "get_cids", "user": u, **pin_for(u)})
        elif kind == "revoke_user":
            label, owner, _, _ = rng.choice(creds)
            script.append({"op": "revoke_user", "user": owner, "cred": label, **pin_for(owner)})
        elif kind == "revoke_issuer":
            label, _, s, _ = rng.choice(creds)
            script.append({"op": "revoke_issuer", "issuer": s, "cred": label})
        elif kind == "vnotify":
            script.append({"op": "vnotify", "rp": rng.choice(RPS)})
        elif kind == "tick":
            script.append({"op": "tick", "dt": rng.between(1, 1000)})
        elif kind == "drop":
            a, b = rng.choice(droppable)
            script.append({"op": "drop_next", "sender": a, "receiver": b})
        elif kind == "bogus":
            # Someone else's credential, or one that was never issued.
            label = rng.choice([c[0] for c in creds] + ["ghost"]) if creds else "ghost"
            script.append({"op": "present", "user": u, "cred": label, "aids": [], "as": f"x{len(script)}"})
    return script[:max_events]


def random_clone_script(rng: Rng, guess_right: bool) -> list[dict]:
    """One user and issuer, a clone, and adversary requests from the clone."""
    pin = rng.below(10_000)
    wrong = (pin + 1 + rng.below(9_999)) % 10_000
    script = [{"op": "init_user", "user": "victim", "pin": pin},
              {"op": "register_issuer", "issuer": "gov"},
              {"op": "issue", "user": "victim", "issuer": "gov", "aids": ["age", "name"], "as": "c0"},
              {"op": "clone_memory", "user": "victim"}]
    if guess_right:
        script.append({"op": "guess_pin", "user": "victim", "pin": pin})
    for k in range(rng.between(1, 4)):
        routine = rng.choice(["issue", "revoke", "present"])
        ev: dict[str, Any] = {"op": "adv_request", "user": "victim", "routine": routine}
        if not guess_right:
            ev["pin"] = wrong
        if routine == "issue":
            ev.update(issuer="gov", aids=["age"])
        elif routine == "revoke":
            ev.update(cred="c0")
        else:
            ev.update(cred="c0", aids=["age"])
        script.append(ev)
    return script


# -- leakage ------------------------------------------------------------------------------


class LeakViolation(AssertionError):
    pass


ROWS = {
    "issuer": ("I",),
    "AMS": ("AMS",),
    "RP": ("RP",),
    "issuer+RP": ("I", "RP"),
    "AMS+issuer": ("AMS", "I"),
    "AMS+RP": ("AMS", "RP"),
    "AMS+issuer+RP": ("AMS", "I", "RP"),
}

# Per coalition: issue (cID, aids, atrs), revoke (cID), present (aids, atrs, cID).
EXPECTED_DISCLOSURE = {
    "issuer":        {"issue": ("yes", "yes", "yes"), "revoke": "no",  "present": ("none", "none", "no")},
    "AMS":           {"issue": ("yes", "yes", "no"),  "revoke": "no",  "present": ("count", "none", "no")},
    "RP":            {"issue": ("no", "no", "no"),    "revoke": "no",  "present": ("dscl", "dscl", "yes")},
    "issuer+RP":     {"issue": ("yes", "yes", "yes"), "revoke": "no",  "present": ("all", "all", "yes")},
    "AMS+issuer":    {"issue": ("yes", "yes", "yes"), "revoke": "no",  "present": ("count", "none", "no")},
    "AMS+RP":        {"issue": ("yes", "yes", "no"),  "revoke": "yes", "present": ("all", "dscl", "yes")},
    "AMS+issuer+RP": {"issue": ("yes", "yes", "yes"), "revoke": "yes", "present": ("all", "all", "yes")},
}

HANDLE_FIELDS = {"id_cid", "cred", "sigma_cred", "rev_I", "rev_U", "x", "cids", "creds"}


def leakage_script(row: str) -> list[dict]:
    """Issue, present + verify, then a user revocation, with the row's parties corrupted."""
    script: list[dict] = [{"op": "init_user", "user": "alice", "pin": 4321},
                          {"op": "register_issuer", "issuer": "gov"}]
    names = {"I": "I:gov", "RP": "RP:shop", "AMS": "AMS"}
    script += [{"op": "corrupt", "party": names[p]} for p in ROWS[row]]
    script += [{"op": "issue", "user": "alice", "issuer": "gov", "aids": ["age", "name", "nationality"], "as": "c"},
               {"op": "present", "user": "alice", "cred": "c", "aids": ["age"], "as": "p"},
               {"op": "verify", "user": "alice", "rp": "shop", "pres": "p"},
               {"op": "revoke_user", "user": "alice", "cred": "c"}]
    return script


def _atoms(v: Any):
    if isinstance(v, (tuple, list, frozenset, set)):
        for x in v:
            yield from _atoms(x)
    else:
        yield v


def coalition_knowledge(result: RunResult, coalition: set[str]) -> dict[int, dict[str, set]]:
    """Per sid: field name -> observed atoms, from bus views and registry leakage."""
    know: dict[int, dict[str, set]] = {}

    def add(sid: int, name: str, value: Any) -> None:
        know.setdefault(sid, {}).setdefault(name, set()).update(_atoms(value))

    for m in result.transcript.messages:
        if m.sender in coalition or m.receiver in coalition:
            for k, v in m.view.items():
                add(m.sid, k, v)
    corrupted_users = {p for p in coalition if p.startswith("U:")}
    server = P.AMS in coalition
    for rec in result.leak_log:
        sid, op = rec["sid"], rec["op"]
        if op == "issue":
            add(sid, "party", (rec["U"], rec["R"]))
            if rec["R"] in coalition or rec["U"] in coalition:
                add(sid, "x", rec["x"])
        elif op == "revoke":
            add(sid, "party", rec["R"])
            add(sid, "legit", rec["legit"])
            if server and any(v in coalition for v in rec["presented_to"]):
                add(sid, "x", rec["x"])
            if rec["users"] & corrupted_users:
                add(sid, "x", rec["x"])
        elif op == "unotify":
            add(sid, "party", rec["U"])
        elif op == "vnotify":
            add(sid, "party", rec["V"])
        elif op == "verify":
            add(sid, "fresh", rec["fresh"])
            if rec["V"] in coalition:
                add(sid, "x", rec["x"])
            if server and rec["V"] in coalition:
                add(sid, "revsids", rec["revsids"])
    return know


def _components(know: dict[int, dict[str, set]], sids: list[int]) -> dict[int, int]:
    parent = {s: s for s in sids}

    def find(s):
        while parent[s] != s:
            parent[s] = parent[parent[s]]
            s = parent[s]
        return s

    owner: dict[Any, int] = {}
    for s in sids:
        for f in HANDLE_FIELDS:
            for a in know.get(s, {}).get(f, ()):
                if a in owner:
                    parent[find(s)] = find(owner[a])
                else:
                    owner[a] = s
    return {s: find(s) for s in sids}


def measure_disclosure(result: RunResult, coalition: set[str], atrs_all: tuple[str, ...],
                       atrs_dscl: tuple[str, ...]) -> dict:
    know = coalition_knowledge(result, coalition)
    by_op = {op: sid for sid, op in result.sids.items()}
    s_issue, s_pres, s_ver, s_rev = by_op["issue"], by_op["present"], by_op["verify"], by_op["revoke_user"]

    def fields(*sids):
        out: dict[str, set] = {}
        for s in sids:
            for k, v in know.get(s, {}).items():
                out.setdefault(k, set()).update(v)
        return out

    def has_handle(f):
        return any(f.get(h) for h in HANDLE_FIELDS)

    def seen_values(f):
        return {a for v in f.values() for a in v if isinstance(a, str)}

    fi = fields(s_issue)
    issue = ("yes" if has_handle(fi) else "no",
             "yes" if fi.get("aids") else "no",
             "yes" if set(atrs_all) & seen_values(fi) else "no")

    # Present phase: knowledge up to the end of verify; links may reach the issue session.
    comp = _components(know, [s_issue, s_pres, s_ver])
    fp = fields(s_pres, s_ver)
    linked = comp[s_pres] == comp[s_issue] or comp[s_ver] == comp[s_issue]
    if fp.get("aids_dscl"):
        aids = "all" if linked and fi.get("aids") else "dscl"
    elif fp.get("n_dscl"):
        aids = "all" if linked and fi.get("aids") else "count"
    else:
        aids = "none"
    pv = seen_values(fp)
    if set(atrs_dscl) & pv:
        atrs = "all" if linked and set(atrs_all) & seen_values(fi) else "dscl"
    else:
        atrs = "none"
    present = (aids, atrs, "yes" if has_handle(fp) else "no")

    comp = _components(know, [s_issue, s_pres, s_ver, s_rev])
    fr = fields(s_rev)
    revoke = "yes" if has_handle(fr) and any(comp[s_rev] == comp[s] for s in (s_issue, s_pres, s_ver)) else "no"
    return {"issue": issue, "revoke": revoke, "present": present}


def assert_leakage(row: str, seed: int = 0, config: P.Config | None = None) -> dict:
    """Run the row's scenario and compare what the coalition saw with the expected disclosure."""
    script = leakage_script(row)
    result = run_scenario(script, seed, config)
    coalition = set(result.world.corrupted)
    issue_out = next(v for i, p, k, v in result.real if k == "issue-resp")
    pres_out = next(v for i, p, k, v in result.real if k == "present-resp")
    if issue_out is None or pres_out is None:
        raise LeakViolation(f"{row}: scenario did not complete: {result.errors}")
    atrs_all = tuple(attribute_values("gov", "alice", issue_out, ("age", "name", "nationality")))
    got = measure_disclosure(result, coalition, atrs_all, pres_out.atrs)
    want = EXPECTED_DISCLOSURE[row]
    # Attribute plaintexts outside the coalition's entitlement must not show up anywhere.
    if "I" not in ROWS[row]:
        everything = coalition_knowledge(result, coalition)
        seen = {a for f in everything.values() for v in f.values() for a in v if isinstance(a, str)}
        hidden = set(atrs_all) - (set(pres_out.atrs) if "RP" in ROWS[row] else set())
        if hidden & seen:
            raise LeakViolation(f"{row}: saw undisclosed attribute values {sorted(hidden & seen)}")
    if got != want:
        diff = {k: (got[k], want[k]) for k in want if got[k] != want[k]}
        raise LeakViolation(f"{row}: observed vs expected {diff}")
    return got


# -- honest-run audit -----------------------------------------------------------------------

INJECTED = {"Dropped", "AuthFail"}


def audit_honest(script: list[dict], result: RunResult) -> list[str]:
    """Problems in a random honest run: output mismatches and wrong verdicts.

    A verdict of 1 is wrong for a credential that was never issued or was
    revoked earlier. A missing or 0 verdict is wrong for a live credential
    unless the run injected a drop or a wrong PIN.
    """
    problems = [f"mismatch {r} != {i}" for r, i in result.mismatches()]
    issued = {v for _, _, k, v in result.real if k == "issue-resp" and v is not None}
    got = {}
    for i, party, kind, v in result.real:
        got.setdefault(i, v)
    revoked: set[P.CredentialId] = set()
    world = result.world
    reg = world.dep.registry
    committed = set(reg.revoked) | set(reg.archive)  # by sid; a dropped receipt still counts
    for i, ev in enumerate(script):
        op = ev["op"]
        if op in ("revoke_user", "revoke_issuer") and (got.get(i) == "ok" or i + 1 in committed):
            revoked.add(world.creds[ev["cred"]])
        elif op == "present":
            cid = world.creds.get(ev["cred"])
            live = cid in issued and cid not in revoked and P.parse_summary(cid.summary)[0] == ev["user"]
            if got.get(i) is not None and not live:
                problems.append(f"event {i}: presented a dead credential")
            if got.get(i) is None and live and result.errors.get(i) not in INJECTED:
                problems.append(f"event {i}: live credential failed to present ({result.errors.get(i)})")
        elif op == "verify":
            entry = world.pres.get(ev["pres"])
            out = got.get(i)
            if entry is None:
                if out is not None:
                    problems.append(f"event {i}: verified an unknown presentation")
                continue
            cid = entry[1]
            live = cid in issued and cid not in revoked
            if out is not None and out[1] == 1 and not live:
                problems.append(f"event {i}: v=1 for a revoked or never-issued credential")
            if live and (out is None and result.errors.get(i) not in INJECTED or out is not None and out[1] != 1):
                problems.append(f"event {i}: live credential did not verify ({result.errors.get(i)})")
    return problems
