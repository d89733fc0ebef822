"""Acceptance checks, one PASS/FAIL line per criterion.

Under pytest the lines appear in the terminal summary. Running this file
directly (python3 tests/test_acceptance.py) prints only the lines.
"""

from __future__ import annotations

import copy
import itertools
import sys
import time
import warnings

import pytest

from prettiness import bench
from prettiness import harness as hz
from prettiness import parties as P
from prettiness import revocation as rv
from prettiness import split_decrypt as td
from prettiness import split_sign as ts
from prettiness.crypto_suite import FULL, GROUP_2048, TEST, Rng, rsa_keygen
from prettiness.ideal_model import TdecOracle, TsignOracle
from prettiness.wire import Bus

LINES: dict[int, str] = {}


def record(num: int, title: str, check) -> None:
    try:
        detail = check()
    except BaseException as e:
        LINES[num] = f"FAIL {num:>2}  {title}: {type(e).__name__}: {str(e)[:300]}"
        print(LINES[num])
        raise
    LINES[num] = f"PASS {num:>2}  {title}: {detail}"
    print(LINES[num])


# -- 1 --------------------------------------------------------------------------------


def check_differential(count=1000, seed=2024):
    root = Rng(seed)
    t0 = time.perf_counter()
    problems, verdicts, live_ok, events = [], {0: 0, 1: 0}, 0, 0
    for k in range(count):
        script = hz.random_honest_script(root.fork(f"script/{k}"))
        result = hz.run_scenario(script, k)
        events += len(script)
        problems += [f"script {k}: {p}" for p in hz.audit_honest(script, result)]
        for i, party, kind, v in result.real:
            if kind == "verify-resp" and party.startswith("U:") and v is not None:
                verdicts[v[1]] += 1
    dt = time.perf_counter() - t0
    assert not problems, f"{len(problems)} problems, first: {problems[:3]}"
    assert dt <= 60, f"outputs agree but the run took {dt:.1f} s (bound 60 s)"
    return f"{count} scripts, {events} events, 0 mismatches, verdicts v=1:{verdicts[1]} v=0:{verdicts[0]}, {dt:.1f} s"


# -- 2 --------------------------------------------------------------------------------


def check_clone_gating(count=200):
    completed_wrong = requests_wrong = requests_right = completed_right = 0
    for k in range(count):
        for right in (False, True):
            script = hz.random_clone_script(Rng(k).fork(f"clone/{right}"), guess_right=right)
            upto = next(i for i, ev in enumerate(script) if ev["op"] == "clone_memory") + 1
            before = hz.run_scenario(script[:upto], k)
            assert before.world.level["victim"] == 1 and before.ideal_world.c["victim"] == 1
            result = hz.run_scenario(script, k)
            assert not result.mismatches(), result.mismatches()
            adv = [(i, v) for i, party, kind, v in result.real
                   if party == "A" and kind in ("issue", "revoke", "present")]
            if right:
                requests_right += len(adv)
                assert result.world.level["victim"] == 2 and result.ideal_world.c["victim"] == 2
                for i, v in adv:
                    # Requests are accepted; a present after the clone's own revoke is refused as revoked.
                    assert v is not None or result.errors.get(i) == "Revoked", (k, i, result.errors.get(i))
                    completed_right += v is not None
            else:
                requests_wrong += len(adv)
                completed_wrong += sum(v is not None for _, v in adv)
                assert result.world.level["victim"] == 1 and result.ideal_world.c["victim"] == 1
    assert completed_wrong == 0, f"{completed_wrong} adversary requests completed without the PIN"
    return (f"without PIN 0/{requests_wrong} requests completed; with PIN {completed_right}/{requests_right} "
            f"completed, level 1 -> 2 in all {count}")


# -- 3 --------------------------------------------------------------------------------


def check_clone_schedules(max_len=7):
    base_client, base_server, pk = ts.keygen("u", 7, 100, 3, Rng(3), TEST)
    schedules, over = 0, []
    for warmup in (0, 1, 2):
        for n in range(2, max_len + 1):
            for sched in itertools.product("OC", repeat=n):
                if len(set(sched)) < 2:
                    continue
                schedules += 1
                client, server = copy.deepcopy(base_client), copy.deepcopy(base_server)
                rng = Rng(schedules)
                for _ in range(warmup):
                    ts.sign(client, server, b"warm", 7, rng)
                parties = {"O": client, "C": copy.deepcopy(client)}
                second = "C" if sched[0] == "O" else "O"
                second_attempts = [i for i, p in enumerate(sched) if p == second]
                deadline = second_attempts[1] if len(second_attempts) > 1 else second_attempts[0]
                blocked_at, clone_ok = None, 0
                for i, who in enumerate(sched):
                    try:
                        ts.sign(parties[who], server, b"m%d" % i, 7, rng)
                        assert blocked_at is None, f"{''.join(sched)}: signed after block"
                        clone_ok += who == "C"
                    except ts.Blocked:
                        blocked_at = i if blocked_at is None else blocked_at
                assert blocked_at is not None and blocked_at <= deadline, ("".join(sched), blocked_at)
                if clone_ok > 1:
                    over.append("".join(sched))
    # A clone that signs again before the original's next attempt looks exactly like the
    # honest device to the server, so these runs give it one session per attempt.
    lead = [s for s in over if s.index("O") == s.count("C", 0, s.index("O")) >= 2]
    assert not over, (f"{len(over)}/{schedules} schedules give the clone more than one session "
                      f"(e.g. {over[0]}); all {len(lead)} are the clone signing repeatedly before the "
                      f"original's first attempt" if len(lead) == len(over) else f"unexpected: {over[:5]}")
    return f"{schedules} schedules, blocked by the second party's first or second attempt, clone wins at most 1"


# -- 4 --------------------------------------------------------------------------------


def check_lockout():
    cases = 0
    for T0 in (1, 2, 3, 5):
        client, server, _ = ts.keygen("u", 7, 100, T0, Rng(T0), TEST)
        rng = Rng(100 + T0)
        for _ in range(T0 - 1):
            with pytest.raises(ts.PinMismatch):
                ts.sign(client, server, b"m", 8, rng)
        ts.sign(client, server, b"m", 7, rng)  # T0-1 misses are not enough
        assert server.T == 0
        for _ in range(T0 - 1):
            with pytest.raises(ts.PinMismatch):
                ts.sign(client, server, b"m", 8, rng)
        with pytest.raises(ts.Blocked):
            ts.sign(client, server, b"m", 8, rng)
        for _ in range(3):
            with pytest.raises(ts.Blocked):
                ts.sign(client, server, b"m", 7, rng)
        cases += 1
        for k in range(1, T0):
            client, server, _ = ts.keygen("u", 7, 100, T0, Rng(k), TEST)
            oracle = TsignOracle()
            oracle.keygen("pk", 100, 7, T0)
            for _ in range(k - 1):
                with pytest.raises(ts.PinMismatch):
                    ts.sign(client, server, b"m", 8, rng)
                assert oracle.sign_honest(b"m", 8) is None
            ts.sign(client, server, b"m", 7, rng)
            assert oracle.sign_honest(b"m", 7, b"s") == b"s"
            assert server.T == 0 and oracle.T == 0
            cases += 1
        oracle = TsignOracle()
        oracle.keygen("pk", 100, 7, T0)
        for _ in range(T0):
            oracle.sign_honest(b"m", 8)
        assert oracle.b_OK == 0 and oracle.sign_honest(b"m", 7, b"s") is None
    return f"T0 in (1,2,3,5): lockout exactly at T0 misses, reset after success at k<T0 ({cases} cases)"


# -- 5 --------------------------------------------------------------------------------


def check_one_more(max_n=6):
    for n in range(max_n + 1):
        t = TsignOracle()
        t.keygen("pk", 100, 7, 3)
        t.corrupt_client(1)
        for _ in range(n):
            assert t.sign_adversary(7)
        got = [t.verify(b"claim%d" % j, b"sig%d" % j, 1) for j in range(n + 1)]
        assert got == [1] * n + [0], (n, got)
        d = TdecOracle()
        for j in range(n + 1):
            d.encrypt(b"m%d" % j, ("c", j))
        for _ in range(n):
            d.decrypt_corrupted_client(None)
        outs = [d.silent_decrypt(lambda c: None, ("c", j)) for j in range(n + 1)]
        assert outs[:n] == [b"m%d" % j for j in range(n)] and outs[n] is None and d.ctr_dec < 0, (n, outs)
    return f"n = 0..{max_n}: the (n+1)th signature claim gets b=0 and the (n+1)th decryption stops"


# -- 6 --------------------------------------------------------------------------------


def _snapshot_case(revoke_first: bool) -> list[int]:
    from conftest import World
    w = World(seed=6 + revoke_first)
    cid = w.issue()
    pres = w.present(cid)
    verdicts = []
    if revoke_first:
        P.revoke_by_user(w.dep, w.alice, cid, 1234, w.fork())
        w.dep.registry.vnotify(w.shop.name)
        verdicts.append(w.verify(cid, pres)[1].verdict)
    else:
        w.dep.registry.vnotify(w.shop.name)
        P.revoke_by_user(w.dep, w.alice, cid, 1234, w.fork())
        verdicts.append(w.verify(cid, pres)[1].verdict)
        verdicts.append(w.verify(cid, pres)[1].verdict)
        w.dep.registry.vnotify(w.shop.name)
        verdicts.append(w.verify(cid, pres)[1].verdict)
    return verdicts


def check_snapshots():
    reg = rv.Registry(rsa_keygen(Rng(1), 512), Rng(2))
    x, y = reg.issue_token("U:a", "U:a", Rng(3)), reg.issue_token("U:a", "U:a", Rng(4))
    reg.revoke("U:a", x, sid=1)
    reg.vnotify("RP:v")
    assert reg.verify_token("U:a", "RP:v", x) is False
    reg.revoke("U:a", y, sid=2)
    assert reg.verify_token("U:a", "RP:v", y) is True
    assert reg.verify_token("U:a", "RP:v", y) is True
    reg.vnotify("RP:v")
    assert reg.verify_token("U:a", "RP:v", y) is False
    assert _snapshot_case(True) == [0]
    assert _snapshot_case(False) == [1, 1, 0]
    return "revoke-then-vnotify -> false; vnotify-then-revoke -> true until the next vnotify (registry and end-to-end)"


# -- 7 --------------------------------------------------------------------------------


def check_byte_formulas():
    client, server, _ = ts.keygen("u", 7, 100, 3, Rng(7), FULL)
    rng = Rng(8)
    sizes = {}
    for m_len in (0, 32, 100, 1000):
        bus = Bus()
        ts.sign(client, server, bytes(m_len), 7, rng, bus=bus)
        sizes[m_len] = bus.total()
        assert sizes[m_len] == 544 + 2 * m_len == ts.message_bytes(m_len)
    assert sizes[100] == 744
    notify = {}
    for m in (0, 100, 10**4):
        reg = rv.Registry(rsa_keygen(Rng(9), 512), Rng(10), bus=Bus())
        reg.seed_revoked(m, Rng(11))
        reg.vnotify("RP:v")
        notify[m] = reg.bus.total()
        assert notify[m] == 114 + 32 * m == rv.notify_bytes(m)
    assert [notify[m] for m in (0, 100, 10**4)] == [114, 3314, 320114]
    dc, ds = td.keygen("u", Rng(12), FULL)
    c, _ = td.encrypt(dc.pk, b"payload", Rng(13))
    bus = Bus()
    ds.allow(1)
    td.decrypt(dc, ds, c, Rng(14), bus=bus)
    dec, overhead = bus.total(), len(c.to_bytes()) - len(b"payload")
    assert dec == td.message_bytes_dec(GROUP_2048) and overhead == td.ciphertext_overhead(GROUP_2048)
    report = bench.measure_all(bench.Params(N=1, n=1, m=0), seed=7, suite=FULL)
    consts = {row[0]: row[1:] for row in bench.table_rows(report)["constants"][1:]}
    assert consts["tdecrypt(Dec) bytes"] == [dec, 106, dec - 106]
    assert consts["ciphertext overhead bytes"] == [overhead, 2618, overhead - 2618]
    return (f"tsign {[sizes[k] for k in sorted(sizes)]}, notify {[notify[k] for k in sorted(notify)]}, "
            f"dec {dec} B (reference 106), ct overhead {overhead} B (reference 2618)")


# -- 8 --------------------------------------------------------------------------------


def check_accounting():
    points = 0
    for N, n, m in itertools.product((1, 10, 100), (0, 1, 10), (0, 100, 10**4)):
        report = bench.measure_all(bench.Params(N=N, n=n, m=m), seed=N + n + m)
        for r in bench.ROUTINES:
            measured = report.rows[r].bytes
            assert measured == report.predicted(r) == bench.account_routine(r, report.params, bench.ArtifactCosts(TEST)), \
                (N, n, m, r, measured, report.predicted(r))
        points += 1
    header = bench.table_rows(report)["summary"][0]
    assert header == ["", "Issue", "Get Creds", "Revoke(I)", "Revoke(U)", "Present", "DB update", "Verify"]
    assert [row[0] for row in bench.table_rows(report)["summary"][1:]] == ["comm (B)", "time (s)"]
    present = bench.account_routine("Present", bench.Params(**bench.REF_POINT), bench.REFERENCE)
    assert present == 7590, present
    return f"{points} grid points x 7 routines byte-exact, table layout matches, reference-constant Present = {present} B"


# -- 9 --------------------------------------------------------------------------------


def check_leakage():
    for row in hz.ROWS:
        hz.assert_leakage(row)
    return f"{len(hz.ROWS)} coalitions: " + ", ".join(hz.ROWS)


# -- 10 -------------------------------------------------------------------------------


def _backup_script(rng: Rng, mutation: str | None) -> list[dict]:
    n = rng.between(2, 4)
    script = [{"op": "init_user", "user": "alice", "pin": 5},
              {"op": "register_issuer", "issuer": "gov"}]
    script += [{"op": "issue", "user": "alice", "issuer": "gov", "aids": rng.sample(hz.AIDS, rng.between(0, 3)),
                "as": f"c{k}"} for k in range(n)]
    if mutation:
        script.append({"op": "tamper", "target": "backup", "mutation": mutation, "index": rng.below(n)})
    script.append({"op": "get_cids", "user": "alice"})
    return script


def check_digest_integrity(count=100):
    mutations = ("omit", "modify", "reorder")
    seen = dict.fromkeys(mutations, 0)
    for k in range(count):
        mutation = mutations[k % 3]
        script = _backup_script(Rng(k).fork("tamper"), mutation)
        result = hz.run_scenario(script, k)
        assert result.errors.get(len(script) - 1) == "DigestMismatch", (k, mutation, result.errors)
        seen[mutation] += 1
    for k in range(count):
        script = _backup_script(Rng(k).fork("honest"), None)
        result = hz.run_scenario(script, k)
        last = len(script) - 1
        assert last not in result.errors, result.errors
        got = next(v for i, party, kind, v in result.real if i == last)
        assert list(got) == [result.world.creds[f"c{j}"] for j in range(last - 2)]
    return f"{count} tampered backups rejected ({seen}), {count} honest backups restored"


# -- 11 -------------------------------------------------------------------------------


def check_binding(toy_trials=10_000, full_attempts=10**6):
    dc, _ = td.keygen("u", Rng(15), TEST)
    keys = td.toy_keys(8)
    trials = hits = cts = 0
    while trials < toy_trials:
        m = b"attr=%d" % cts
        c, _ = td.encrypt(dc.pk, m, Rng(1000 + cts), tag_len=1)
        hits += len(td.second_openings(c, m, keys))
        trials += len(keys)
        cts += 1
    rate = hits / trials
    assert 2**-8 / 3 <= rate <= 3 * 2**-8, f"rate {rate:.5f} outside [2^-8/3, 3*2^-8]"
    found = attempts = 0
    rng = Rng(16)
    per_ct = 10_000
    for j in range(full_attempts // per_ct):
        m = b"attr=%d" % j
        c, _ = td.encrypt(dc.pk, m, Rng(5000 + j))
        raw = rng.bytes(32 * per_ct)
        for off in range(0, len(raw), 32):
            k = raw[off:off + 32]
            if td.verify_decryption(c, td.Opening(td.sym_decrypt(k, c.c1), k)):
                found += 1
        attempts += per_ct
    assert found == 0, f"{found} second openings with the full tag"
    return (f"8-bit tag: {hits}/{trials} = {rate * 256:.2f} x 2^-8 over {cts} ciphertexts; "
            f"full tag: 0/{attempts}")


# -- 12 -------------------------------------------------------------------------------


def check_freshness(count=100):
    script = [{"op": "init_user", "user": "alice", "pin": 5},
              {"op": "register_issuer", "issuer": "gov"},
              {"op": "issue", "user": "alice", "issuer": "gov", "aids": ["age", "name"], "as": "c"}]
    captured = []
    for k, rp in enumerate(hz.RPS):
        script += [{"op": "present", "user": "alice", "cred": "c", "aids": ["age"], "as": f"p{k}"},
                   {"op": "verify", "user": "alice", "rp": rp, "pres": f"p{k}", "as": f"v{k}"}]
        captured.append((f"v{k}", rp))
    start = len(script)
    rng = Rng(12)
    for _ in range(count):
        label, origin = rng.choice(captured)
        target = origin if rng.below(2) else rng.choice(hz.RPS)
        script.append({"op": "replay_verify", "verify": label, "rp": target})
    result = hz.run_scenario(script, 12)
    assert all(result.errors.get(i) is None for i in range(start)), result.errors
    errs = [result.errors.get(i) for i in range(start, len(script))]
    assert errs == ["StaleChallenge"] * count, errs
    accepted = [v for i, party, kind, v in result.real if i >= start and v is not None]
    assert accepted == []
    return f"{count}/{count} replays rejected with StaleChallenge"


# -- pytest entry points ----------------------------------------------------------------


def test_differential_random_scripts():
    record(1, "real vs ideal outputs on random honest scripts", check_differential)


def test_clone_needs_pin():
    record(2, "clone without PIN completes nothing; with PIN completes and escalates", check_clone_gating)


def test_clone_detection_schedules():
    record(3, "clone detection over all signing schedules", check_clone_schedules)


def test_pin_lockout():
    record(4, "PIN lockout and counter reset", check_lockout)


def test_one_more_discipline():
    record(5, "one-more signature and decryption counters", check_one_more)


def test_snapshot_orderings():
    record(6, "revocation snapshot semantics", check_snapshots)


def test_byte_formulas():
    record(7, "per-primitive byte formulas", check_byte_formulas)


def test_routine_accounting():
    record(8, "per-routine byte accounting", check_accounting)


def test_leakage_matrix():
    record(9, "coalition leakage", check_leakage)


def test_backup_digest():
    record(10, "backup digest integrity", check_digest_integrity)


def test_decryption_binding():
    record(11, "decryption binding", check_binding)


def test_replay_freshness():
    record(12, "challenge freshness", check_freshness)


if __name__ == "__main__":
    sys.path.insert(0, __file__.rsplit("/", 1)[0])
    warnings.simplefilter("ignore", UserWarning)
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except BaseException:
                failed += 1
    sys.exit(1 if failed else 0)
