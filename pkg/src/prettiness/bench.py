"""Byte accounting and timing for the seven top-level routines.

``account_routine`` predicts the bytes of a routine from closed-form
component formulas. With ``ArtifactCosts`` the formulas describe this
implementation's wire encoding and must agree with ``measure_routine``
byte for byte. ``ReferenceCosts`` carries the published reference constants
for the same line items, so both can be printed side by side.

Channel set-up messages are not counted. A user's revocation-status
download during a presentation is counted under DB update, as is a
verifier's snapshot download.
"""

from __future__ import annotations

import csv
import io
import time
import warnings
from dataclasses import dataclass, field

from . import parties as P
from . import split_decrypt as tdec
from .crypto_suite import FULL, H, Rng, Suite
from .revocation import NOTIFY_HEADER_BYTES, NOTIFY_REQUEST_BYTES, TOKEN_BYTES
from .split_sign import NONCE_BYTES
from .wire import Bus

ROUTINES = ("Issue", "GetCreds", "RevokeI", "RevokeU", "Present", "DBupdate", "Verify")
HEADERS = {"Issue": "Issue", "GetCreds": "Get Creds", "RevokeI": "Revoke(I)", "RevokeU": "Revoke(U)",
           "Present": "Present", "DBupdate": "DB update", "Verify": "Verify"}

# Reference point of the published full-system estimate.
REF_POINT = {"N": 100, "n": 10, "m": 10**6}
REF_COMM = {"Issue": 90716, "GetCreds": 3906474, "RevokeI": 3355, "RevokeU": 6688, "Present": 7590,
            "DBupdate": 32000114, "Verify": 122170}
REF_TIME = {"Issue": 8.114, "GetCreds": 0.127, "RevokeI": 1.027, "RevokeU": 1.487, "Present": 5.71,
            "DBupdate": 0.716, "Verify": 4.702}
REF_DEC = 106
REF_CT_OVERHEAD = 2618


@dataclass(frozen=True)
class Params:
    N: int = 100
    n: int = 10
    m: int = 0
    uid: str = "alice"
    iid: str = "issuer"
    rid: str = "shop"
    atr_len: int = 16

    def __post_init__(self):
        if min(self.N, self.n, self.m) < 0 or self.N < 1:
            raise ValueError("N >= 1 and n, m >= 0 required")
        if self.n > 100:
            raise ValueError("at most 100 attributes")

    @property
    def aids(self) -> tuple[str, ...]:
        return tuple(f"attr{i:02d}" for i in range(self.n))


def _s(text: str) -> int:
    return 4 + len(text.encode())


@dataclass(frozen=True)
class ArtifactCosts:
    """Component sizes of this implementation's encoding."""

    suite: Suite = FULL
    name: str = "artifact"

    @property
    def M(self) -> int:
        return self.suite.sig_bytes

    @property
    def E(self) -> int:
        return self.suite.group.element_bytes

    @property
    def dec(self) -> int:
        return tdec.message_bytes_dec(self.suite.group)

    @property
    def ct_overhead(self) -> int:
        return tdec.ciphertext_overhead(self.suite.group)

    def tsign(self, m_len: int, blind: bool = False) -> int:
        payload = self.M if blind else m_len
        return 2 * self.M + 2 * NONCE_BYTES + 2 * payload

    def notify(self, m: int) -> int:
        return NOTIFY_REQUEST_BYTES + NOTIFY_HEADER_BYTES + TOKEN_BYTES * m

    # pieces of the encoding

    def ct(self, pt_len: int) -> int:
        return 4 + self.ct_overhead + pt_len

    def request(self, m_len: int, extra: int = 0) -> int:
        return (4 + self.M) + (4 + m_len) + extra

    def aids_field(self, p: Params) -> int:
        return 4 + sum(4 + len(a) for a in p.aids)

    def cid_wire(self, p: Params) -> int:
        summary = len(P.summary(p.uid, p.aids, p.iid))
        return 4 + P.CID_BYTES + 4 + summary

    def cred_wire(self, p: Params) -> int:
        slot = lambda aid, pt: 4 + len(aid) + self.ct(pt)
        pk = slot(P.PK_BINDING, self.M + 4)
        attrs = sum(slot(a, p.atr_len) for a in p.aids)
        rev = slot(P.REV, 2 * (4 + TOKEN_BYTES))
        return 4 + pk + attrs + rev

    def rev_issue(self, p: Params) -> int:
        # user token: U asks, F answers U; issuer token: U and I ask, F answers both
        u, i = _s(f"U:{p.uid}"), _s(f"I:{p.iid}")
        return (u + TOKEN_BYTES) + (i + u + 2 * TOKEN_BYTES)

    def rev_revoke(self, revoker: str) -> int:
        request = 4 + TOKEN_BYTES + 8
        receipt = TOKEN_BYTES + _s(revoker) + 8 + 8 + self.M
        return request + receipt

    def rev_verify(self, p: Params) -> int:
        return (4 + TOKEN_BYTES + _s(f"RP:{p.rid}")) + 1 + (TOKEN_BYTES + 1) + 1

    def openings(self, p: Params) -> int:
        return 2 * (4 + 32) + 4 + p.n * (4 + 32)

    def items(self, routine: str, p: Params) -> list[tuple[str, int]]:
        M = self.M
        if routine == "Issue":
            m_len = 1 + (4 + P.CID_BYTES) + _s(p.uid) + self.aids_field(p) + _s(p.iid)
            c_rev_r = self.ct(32)
            return [("tsign (sign and verify)", self.tsign(m_len) + self.request(m_len, c_rev_r)),
                    ("ST->U: I, IID", _s(p.iid)),
                    ("ST->I: id_cID, uID, aids, sigma_req, c_rev_r",
                     (4 + P.CID_BYTES) + _s(p.uid) + self.aids_field(p) + (4 + M) + c_rev_r),
                    ("U->I: rev_U", TOKEN_BYTES),
                    ("rev(issue)", self.rev_issue(p)),
                    ("I->ST: cred, sigma_cred", self.cred_wire(p) + 4 + M),
                    ("ST->U: cred, sigma_cred", self.cred_wire(p) + 4 + M),
                    ("(n+2) x tdecrypt(Dec)", (p.n + 2) * self.dec),
                    ("U->ST: accept", 1)]
        if routine == "GetCreds":
            m_len = 1 + _s(p.uid)
            entry = 4 + self.cid_wire(p) + self.cred_wire(p) + (4 + M) + self.ct(32)
            return [("tsign (sign and verify)", self.tsign(m_len) + self.request(m_len)),
                    ("ST->U: data", 4 + p.N * entry + 4)]
        if routine == "RevokeI":
            m_len = 1 + _s(p.iid) + self.ct(self.cid_wire(p))
            return [("I->ST: m, sigma_req", _s(p.uid) + (4 + m_len) + (4 + M)),
                    ("rev(revoke)", self.rev_revoke(f"I:{p.iid}"))]
        if routine == "RevokeU":
            m_len = 1 + _s(p.uid) + self.ct(self.cid_wire(p))
            return [("tsign (sign and verify)", self.tsign(m_len) + self.request(m_len)),
                    ("tdecrypt(Dec)", self.dec),
                    ("rev(revoke)", self.rev_revoke(f"U:{p.uid}"))]
        if routine == "Present":
            m_len = 1 + _s(p.uid) + 8 + self.ct(self.cid_wire(p) + self.aids_field(p))
            return [("tsign (sign and verify)", self.tsign(m_len) + self.request(m_len)),
                    ("(n+1) x tdecrypt(Dec)", (p.n + 1) * self.dec)]
        if routine == "DBupdate":
            return [("rev(v/u notify)", self.notify(p.m))]
        if routine == "Verify":
            bundle = (_s(p.uid) + self.cred_wire(p) + (4 + M) + self.aids_field(p)
                      + (4 + p.n * (4 + p.atr_len)) + _s(p.iid) + (4 + 2 * (4 + TOKEN_BYTES))
                      + (4 + M) + (4 + P.CH_BYTES) + (4 + M + 4) + self.openings(p))
            return [("RP->U: ch", P.CH_BYTES),
                    ("tsign (sign)", self.tsign(0, blind=True)),
                    ("U->RP: data", bundle - self.openings(p)),
                    ("2 x rev(verify)", 2 * self.rev_verify(p)),
                    ("(n+2) x tdecrypt(Verify)", self.openings(p))]
        raise ValueError(f"unknown routine {routine!r}")


@dataclass(frozen=True)
class ReferenceCosts:
    """Published line items. Only n, N and m scale; everything else is the reference value."""

    name: str = "reference"
    dec: int = REF_DEC
    ct_overhead: int = REF_CT_OVERHEAD

    @staticmethod
    def tsign(m_len: int) -> int:
        return 544 + 2 * m_len

    @staticmethod
    def notify(m: int) -> int:
        return 114 + 32 * m

    def items(self, routine: str, p: Params) -> list[tuple[str, int]]:
        if routine == "Issue":
            return [("tsign (sign and verify)", 7638), ("ST->U: I, IID", 128),
                    ("ST->I: id_cID, uID, aids, sigma_req, c_rev_r", 3994), ("U->I: rev_U", 32),
                    ("rev(issue)", 48), ("I->ST: cred, sigma_cred", 38802), ("ST->U: cred, sigma_cred", 38802),
                    ("(n+2) x tdecrypt(Dec)", (p.n + 2) * self.dec), ("U->ST: accept", 0)]
        if routine == "GetCreds":
            return [("tsign (sign and verify)", 674), ("ST->U: data", p.N * 39058)]
        if routine == "RevokeI":
            return [("I->ST: m, sigma_req", 3195), ("rev(revoke)", 160)]
        if routine == "RevokeU":
            return [("tsign (sign and verify)", 6422), ("tdecrypt(Dec)", self.dec), ("rev(revoke)", 160)]
        if routine == "Present":
            return [("tsign (sign and verify)", 6424), ("(n+1) x tdecrypt(Dec)", (p.n + 1) * self.dec)]
        if routine == "DBupdate":
            return [("rev(v/u notify)", self.notify(p.m))]
        if routine == "Verify":
            return [("RP->U: ch", 32), ("tsign (sign)", 80900), ("U->RP: data", 40530),
                    ("2 x rev(verify)", 2 * 162), ("(n+2) x tdecrypt(Verify)", (p.n + 2) * 32)]
        raise ValueError(f"unknown routine {routine!r}")


REFERENCE = ReferenceCosts()


def account_routine(routine: str, params: Params, model=None) -> int:
    model = model or ArtifactCosts()
    return sum(b for _, b in model.items(routine, params))


# -- measurement --------------------------------------------------------------------


@dataclass
class Measurement:
    routine: str
    bytes: int
    seconds: float


@dataclass
class BenchReport:
    params: Params
    suite: Suite
    rows: dict[str, Measurement] = field(default_factory=dict)

    def predicted(self, routine: str, model=None) -> int:
        return account_routine(routine, self.params, model or ArtifactCosts(self.suite))


def fixed_width_attributes(width: int):
    def source(iid: str, uid: str, cid: P.CredentialId, aids) -> list[str]:
        return [H(iid.encode(), uid.encode(), cid.id, a.encode()).hex()[:width].ljust(width, "0") for a in aids]
    return source


def measure_all(params: Params, seed: int = 0, suite: Suite | None = None) -> BenchReport:
    """One user lifecycle; every routine is metered by its own session id."""
    suite = suite or Suite.test()
    if not 1 <= params.atr_len <= 64:
        raise ValueError("atr_len must be in 1..64")
    rng = Rng(seed)
    bus = Bus()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        dep = P.Deployment(P.Config(suite=suite), rng.fork("deployment"), bus)
        user = P.initialise(dep, params.uid, 0, rng.fork("user"))
        issuer = dep.add_issuer(params.iid, rng.fork("issuer"), fixed_width_attributes(params.atr_len))
    rp = dep.add_rp(params.rid)
    report = BenchReport(params, suite)

    def timed(routine: str, sid: int, fn, *args):
        t = time.perf_counter()
        out = fn(*args)
        dt = time.perf_counter() - t
        report.rows.setdefault(routine, Measurement(routine, bus.total(routine, sid), dt))
        return out

    aids = params.aids
    cids = [timed("Issue", 100 + k, P.issue, dep, user, issuer, aids, 0, rng.fork(f"issue/{k}"), 100 + k)
            for k in range(params.N)]
    timed("GetCreds", 1, P.get_cids, dep, user, 0, rng.fork("getcids"), 1)
    pres = timed("Present", 2, P.present, dep, user, cids[0], aids, 0, rng.fork("present"), 2)
    dep.registry.seed_revoked(params.m, rng.fork("seed-revoked"))

    def vnotify():
        with bus.routine("DBupdate", 3):
            dep.registry.vnotify(rp.name)

    timed("DBupdate", 3, vnotify)
    _, result = timed("Verify", 4, P.verify, dep, user, rp, cids[0], aids, pres, 0, rng.fork("verify"), 4)
    if result.verdict != 1:
        raise RuntimeError(f"bench verification failed: {result.reason}")
    timed("RevokeU", 5, P.revoke_by_user, dep, user, cids[0], 0, rng.fork("revoke-u"), 5)
    timed("RevokeI", 6, P.revoke_by_issuer, dep, issuer, cids[-1], rng.fork("revoke-i"), 6)
    return report


def measure_routine(routine: str, params: Params, seed: int = 0, suite: Suite | None = None) -> tuple[int, float]:
    m = measure_all(params, seed, suite).rows[routine]
    return m.bytes, m.seconds


# -- tables -----------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3f}"
    if isinstance(v, int):
        return f"{v:,}"
    return str(v)


def _grid(rows: list[list]) -> str:
    cells = [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
    lines = []
    for k, r in enumerate(cells):
        lines.append(" | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
        if k == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines)


def table_rows(report: BenchReport) -> dict[str, list[list]]:
    p = report.params
    art = ArtifactCosts(report.suite)
    at_point = (p.N, p.n, p.m) == (REF_POINT["N"], REF_POINT["n"], REF_POINT["m"])
    head = [""] + [HEADERS[r] for r in ROUTINES]
    summary = [head,
               ["comm (B)"] + [report.rows[r].bytes for r in ROUTINES],
               ["time (s)"] + [report.rows[r].seconds for r in ROUTINES]]
    reference = [head,
                 ["reference comm (B)"] + [account_routine(r, p, REFERENCE) for r in ROUTINES],
                 ["delta comm (B)"] + [report.rows[r].bytes - account_routine(r, p, REFERENCE) for r in ROUTINES],
                 ["reference time (s)"] + [REF_TIME[r] if at_point else "-" for r in ROUTINES]]
    constants = [["constant", "artifact", "reference", "delta"],
                 ["tdecrypt(Dec) bytes", art.dec, REF_DEC, art.dec - REF_DEC],
                 ["ciphertext overhead bytes", art.ct_overhead, REF_CT_OVERHEAD,
                  art.ct_overhead - REF_CT_OVERHEAD],
                 ["tsign bytes at |m|=100", art.tsign(100), REFERENCE.tsign(100), art.tsign(100) - REFERENCE.tsign(100)],
                 ["notify bytes at m", art.notify(p.m), REFERENCE.notify(p.m), art.notify(p.m) - REFERENCE.notify(p.m)]]
    out = {"summary": summary, "reference": reference, "constants": constants}
    for r in ROUTINES:
        rows = [[f"{HEADERS[r]} item", "artifact", "reference", "delta"]]
        for (label, a), (_, b) in zip(art.items(r, p), REFERENCE.items(r, p)):
            rows.append([label, a, b, a - b])
        total = report.rows[r].bytes
        ref = account_routine(r, p, REFERENCE)
        rows.append(["Total", total, ref, total - ref])
        out[f"breakdown:{r}"] = rows
    return out


def emit_tables(report: BenchReport, fmt: str = "txt") -> str:
    blocks = table_rows(report)
    p = report.params
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", *["c%d" % i for i in range(8)]])
        for name, rows in blocks.items():
            for row in rows:
                w.writerow([name, *[f"{c:.3f}" if isinstance(c, float) else c for c in row]])
        return buf.getvalue()
    if fmt != "txt":
        raise ValueError(f"unknown format {fmt!r}")
    title = (f"Full system, N={p.N} credentials, n={p.n} attributes, m={p.m} revoked tokens "
             f"(RSA {report.suite.rsa_bits} bit, group {report.suite.group.element_bytes * 8} bit)")
    parts = [title, "", _grid(blocks["summary"]), "", "Reference", _grid(blocks["reference"]), "",
             "Constants", _grid(blocks["constants"])]
    for r in ROUTINES:
        parts += ["", _grid(blocks[f"breakdown:{r}"])]
    return "\n".join(parts) + "\n"
