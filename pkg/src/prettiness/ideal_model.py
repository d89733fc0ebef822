"""Executable reference model of the credential system and its two split primitives.

``IdealSystem`` keeps the four tables (issued, revoked, presented-to,
verifiable presentations) and the per-user corruption level, and asks an
``Adversary`` object for every approval the model hands to the adversary.
``TsignOracle`` and ``TdecOracle`` keep the bookkeeping of the ideal signing
and decryption services, including the one-more counters.

The model shares value types with the real parties (``CredentialId``,
``Presentation``) so the two worlds' outputs compare with ``==``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from .parties import CredentialId, Presentation, summary

AMS = "AMS"
IGNORED = "ignored"


class InvalidTransition(Exception):
    pass


@dataclass(frozen=True)
class IssuedRow:
    user: str
    issuer: str
    cid: CredentialId
    aids: tuple[str, ...]
    atrs: tuple[str, ...]


def present_fn(row: IssuedRow, aids_dscl) -> Presentation:
    pick = dict(zip(row.aids, row.atrs))
    return Presentation(tuple(aids_dscl), tuple(pick[a] for a in aids_dscl), row.issuer)


def ver_fn(row: IssuedRow, pres: Presentation) -> bool:
    pick = dict(zip(row.aids, row.atrs))
    return (pres.iid == row.issuer and len(pres.aids) == len(pres.atrs)
            and all(pick.get(a) == v for a, v in zip(pres.aids, pres.atrs)))


class Adversary:
    """Answers the model's approval points. The default approves everything.

    ``issue_ok`` and ``verify_ok`` must supply the adversary-chosen cID and
    challenge; the harness subclass derives them from the same randomness the
    real parties use.
    """

    def issue_ok(self, sid: int, user: str, issuer: str, aids: tuple) -> CredentialId | None:
        raise NotImplementedError

    def atr_ok(self, sid: int) -> bool:
        return True

    def getcids_ok(self, sid: int, user: str) -> bool:
        return True

    def revoke_ok(self, sid: int, party: str) -> bool:
        return True

    def present_ok(self, sid: int, user: str) -> bool:
        return True

    def verify_ok(self, sid: int, user: str, rp: str) -> bytes | None:
        raise NotImplementedError

    def auth_ok(self, sid: int, user: str) -> bool:
        return True


class IdealSystem:
    def __init__(self, adversary: Adversary,
                 attributes: Callable[[str, str, CredentialId, tuple], list[str]]):
        self.adv = adversary
        self.attributes = attributes
        self.T_a: dict[CredentialId, IssuedRow] = {}
        self.T_r: set[tuple[str, CredentialId, str]] = set()
        self.T_p: set[tuple[str, CredentialId]] = set()
        self.T_v: list[tuple[IssuedRow, Presentation, tuple, int]] = []
        self.c: dict[str, int] = {}
        self.corrupted: set[str] = set()
        self.used_ch: dict[str, set[bytes]] = {}
        self.leaks: list[tuple] = []
        self.requests = 0  # silent requests that ran
        self.revoke_inputs: list[tuple[int, str, CredentialId]] = []

    # -- bookkeeping -----------------------------------------------------------

    def setup_user(self, user: str) -> None:
        self.c.setdefault(user, 0)

    def is_corrupted(self, party: str) -> bool:
        return party in self.corrupted

    def _leak(self, *msg: Any) -> None:
        self.leaks.append(msg)

    def revoked(self, cid: CredentialId) -> bool:
        return any(c == cid for _, c, _ in self.T_r)

    # -- interfaces ------------------------------------------------------------

    def issue(self, sid: int, user: str, aids, issuer: str) -> CredentialId | None:
        aids = tuple(aids)
        if issuer in self.corrupted or AMS in self.corrupted:
            self._leak("issue-req", sid, user, issuer, aids)
        else:
            self._leak("issue-req", sid, user, issuer, len(aids))
        cid = self.adv.issue_ok(sid, user, issuer, aids)
        if cid is None or cid in self.T_a:
            return None
        atrs = tuple(self.attributes(issuer, user, cid, aids))
        if user in self.corrupted:
            self._leak("issue-atr", sid, atrs)
        else:
            self._leak("issue-atr", sid)
        if not self.adv.atr_ok(sid):
            return None
        self.T_a[cid] = IssuedRow(user, issuer, cid, aids, atrs)
        return cid

    def get_cids(self, sid: int, user: str) -> list[CredentialId] | None:
        self._leak("getcids-req", sid, user)
        if not self.adv.getcids_ok(sid, user):
            return None
        return [cid for cid, row in self.T_a.items() if row.user == user]

    def revoke(self, sid: int, party: str, cid: CredentialId) -> str | None:
        self.revoke_inputs.append((sid, party, cid))
        row = self.T_a.get(cid)
        if row is None or party not in (row.user, row.issuer):
            return None
        seen_by_rp = any(rp in self.corrupted and c == cid for rp, c in self.T_p)
        if (AMS in self.corrupted and seen_by_rp) or row.user in self.corrupted:
            self._leak("revoke-req", sid, party, cid)
        else:
            self._leak("revoke-req", sid, party, row.user)
        if not self.adv.revoke_ok(sid, party):
            return None
        self.T_r.add((row.user, cid, party))
        return "ok"

    def present(self, sid: int, user: str, cid: CredentialId, aids_dscl) -> Presentation | None:
        aids_dscl = tuple(aids_dscl)
        row = self.T_a.get(cid)
        if (row is None or row.user != user or len(set(aids_dscl)) != len(aids_dscl)
                or not set(aids_dscl) <= set(row.aids)):
            return None
        self._leak("present-req", sid, user, len(aids_dscl))
        if not self.adv.present_ok(sid, user):
            return None
        if self.revoked(cid):
            return None
        pres = present_fn(row, aids_dscl)
        if not ver_fn(row, pres):  # unreachable with the canonical Present/Ver pair
            return None
        self.T_v.append((row, pres, aids_dscl, 1))
        return pres

    def verify(self, sid: int, user: str, pres: Presentation, rp: str):
        """Returns ((pres, ch), v), or None when nothing is output."""
        found = None
        if user not in self.corrupted:
            for row, p, aids, ok in self.T_v:
                if row.user == user and p == pres and ok == 1:
                    found = (row, aids)
                    break
        else:
            for row in self.T_a.values():
                if ver_fn(row, pres) and not self.revoked(row.cid):
                    found = (row, pres.aids)
                    break
        if found is None:
            return None
        row, aids = found
        if user not in self.corrupted:
            self.T_p.add((rp, row.cid))
        if rp in self.corrupted and AMS in self.corrupted:
            revsids = frozenset(s for s, p, c in self.revoke_inputs if p == user and c == row.cid)
            self._leak("verify-req", sid, user, row.cid, pres, aids, revsids)
        elif rp in self.corrupted:
            self._leak("verify-req", sid, user, row.cid, pres, aids)
        else:
            self._leak("verify-req", sid, user)
        ch = self.adv.verify_ok(sid, user, rp)
        if ch is None:
            return None
        used = self.used_ch.setdefault(rp, set())
        if rp not in self.corrupted and ch in used:
            return None
        used.add(ch)
        return (pres, ch), 1

    # -- corruption and silent requests -------------------------------------------

    def corrupt_party(self, party: str, is_user: bool = False) -> None:
        """Corruption before the party took part in anything."""
        if is_user:
            if self.c.get(party, 0) != 0:
                raise InvalidTransition(f"{party} already at level {self.c[party]}")
            self.c[party] = 3
        self.corrupted.add(party)

    def corrupt_user(self, user: str):
        level = self.c.get(user, 0)
        if level == 0:
            self.c[user] = 1
            self.corrupted.add(user)
            return None
        if level == 1:
            self.c[user] = 2
            t_a = [row for row in self.T_a.values() if row.user == user]
            t_r = [r for r in self.T_r if r[0] == user]
            self._leak("full-leakage", user, t_a, t_r)
            return t_a, t_r
        raise InvalidTransition(f"{user} at level {level}")

    def authenticate(self, sid: int, user: str) -> bool:
        if not self.adv.auth_ok(sid, user):
            return False
        return self.c.get(user, 0) in (2, 3)

    def silent_request(self, sid: int, routine: str, party: str, inputs: dict, is_issuer: bool = False):
        if not (AMS in self.corrupted or is_issuer):
            if not self.authenticate(sid, party):
                return IGNORED
        self.requests += 1
        if routine == "issue":
            return self.issue(sid, party, inputs["aids"], inputs["issuer"])
        if routine == "revoke":
            return self.revoke(sid, party, inputs["cid"])
        if routine == "present":
            return self.present(sid, party, inputs["cid"], inputs["aids"])
        raise ValueError(f"no silent {routine}")


# -- split signing -----------------------------------------------------------------


class TsignOracle:
    """Bookkeeping of the ideal PIN-protected signing service for one user."""

    def __init__(self):
        self.c_S = self.c_C = self.T = 0
        self.b_lq: int | None = 1
        self.b_OK = 1
        self.b_sk = 1
        self.ctr_s = 0
        self.pk = None
        self.L = self.pin = self.T0 = None
        self.records: dict[tuple[bytes, bytes], int] = {}

    @property
    def b_kg(self) -> bool:
        return self.pk is not None

    def keygen(self, pk, L: int, pin: int, T0: int) -> bool:
        if self.pk is not None or not 0 <= pin < L:
            return False
        self.pk, self.L, self.pin, self.T0 = pk, L, pin, T0
        return True

    def corrupt_server(self) -> None:
        self.c_S = 1
        self._triggers()

    def corrupt_client(self, level: int) -> None:
        if self.c_C > level:
            return
        self.b_lq = None
        self.c_C = 3 if self.pk is None else level
        self._triggers()

    def _triggers(self) -> None:
        if self.c_S == 1 and self.c_C == 1:
            self.c_C = 2

    def clone_check(self, d: int) -> bool:
        if self.b_lq == 1 - d:
            self.b_OK = 0
            return False
        self.b_lq = d
        return True

    def process_pin(self, pin: int) -> bool:
        if pin == self.pin:
            self.T = 0
            return True
        self.T += 1
        if self.T >= self.T0:
            self.b_OK = 0
        return False

    def request_sig(self, m: bytes, sigma: bytes) -> bytes | None:
        if self.records.get((m, sigma)) == 0:
            return None
        self.records[(m, sigma)] = 1
        return sigma

    def sign_honest(self, m: bytes, pin: int, sigma: bytes = b"") -> bytes | None:
        """Client and server together. Returns sigma, or None on sign-fail."""
        if not (self.b_kg and self.b_OK):
            return None
        if not self.clone_check(1) or not self.process_pin(pin):
            return None
        return self.request_sig(m, sigma)

    def sign_adversary(self, pin: int | None, success: bool = True) -> bool:
        """Adversary in the client's seat. True means the server reported sign-success."""
        if not (self.b_kg and self.b_OK and self.c_C > 0):
            return False
        if self.c_C == 1:
            if not self.clone_check(0) or not self.process_pin(pin):
                return False
            self.c_C = 2
        elif self.c_C == 2:
            if not self.clone_check(0):
                return False
        if not success:
            return False
        self.ctr_s += 1
        return True

    def verify(self, m: bytes, sigma: bytes, phi: int) -> int:
        key = (m, sigma)
        if key in self.records:
            return self.records[key]
        if phi == 1 and self.b_sk == 1:
            self.ctr_s -= 1
            b = 1 if self.ctr_s >= 0 else 0
        else:
            b = phi
        self.records[key] = b
        return b


# -- split decryption --------------------------------------------------------------


@dataclass
class TdecOracle:
    """Bookkeeping of the ideal split decryption service for one key."""

    T: list[tuple[bytes, Any]] = field(default_factory=list)
    ctr_dec: int = 0

    def encrypt(self, m: bytes, c) -> None:
        self.T.append((m, c))

    def _decrypt(self, dec: Callable[[Any], bytes | None], c) -> bytes | None:
        ms = {m for m, cc in self.T if cc == c}
        if ms:
            return ms.pop() if len(ms) == 1 else None
        m = dec(c)
        self.T.append((m, c))
        return m

    def decrypt_honest(self, dec, c, ver: Callable[[Any], bool] | None = None) -> bytes | None:
        if ver is not None and not ver(c):
            return None
        return self._decrypt(dec, c)

    def decrypt_corrupted_client(self, c) -> None:
        """A session the server took part in with a corrupted client."""
        self.ctr_dec += 1

    def silent_decrypt(self, dec, c) -> bytes | None:
        m = self._decrypt(dec, c)
        self.ctr_dec -= 1
        if self.ctr_dec < 0:
            return None
        return m

    def verify(self, c, m: bytes) -> bool:
        ms = {mm for mm, cc in self.T if cc == c}
        return ms == {m}


def canonical_cid(nonce: bytes, user: str, aids, issuer: str) -> CredentialId:
    return CredentialId(nonce, summary(user, aids, issuer))
