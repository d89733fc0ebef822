import json
from importlib import resources

import jsonschema
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prettiness import harness as hz
from prettiness.crypto_suite import Rng

SCHEMA = json.loads(resources.files("prettiness").joinpath("data", "scenario.schema.json").read_text())
DEMO = json.loads(resources.files("prettiness").joinpath("data", "demo.json").read_text())

BASE = [{"op": "init_user", "user": "alice", "pin": 1},
        {"op": "register_issuer", "issuer": "gov"},
        {"op": "issue", "user": "alice", "issuer": "gov", "aids": ["age"], "as": "c"}]


def test_same_seed_same_transcript():
    a, b = hz.run_scenario(DEMO, 5), hz.run_scenario(DEMO, 5)
    assert [m.to_json() for m in a.transcript.messages] == [m.to_json() for m in b.transcript.messages]
    assert a.real == b.real
    c = hz.run_scenario(DEMO, 6)
    assert [m.to_json() for m in a.transcript.messages] != [m.to_json() for m in c.transcript.messages]


def test_demo_diverges_only_where_the_snapshot_is_refreshed():
    # The reference model never re-checks revocation at verify time.
    r = hz.run_scenario(DEMO, 0)
    last_verify = max(i for i, ev in enumerate(DEMO) if ev["op"] == "verify")
    assert r.mismatches() and all(real[0] == last_verify for real, _ in r.mismatches())


@given(st.integers(0, 2**32))
@settings(max_examples=30, deadline=None)
def test_generated_scripts_follow_schema_and_bounds(seed):
    script = hz.random_honest_script(Rng(seed))
    jsonschema.validate(script, SCHEMA)
    assert len(script) <= 20
    assert len({e["user"] for e in script if e["op"] == "init_user"}) <= 5
    assert len({e["issuer"] for e in script if e["op"] == "register_issuer"}) <= 3


def test_demo_follows_schema():
    jsonschema.validate(DEMO, SCHEMA)


@pytest.mark.parametrize("script", [
    [{"op": "warp"}],
    [{"op": "init_user", "user": "a", "pin": 10**6}],
    BASE + [{"op": "init_user", "user": "alice", "pin": 2}],
    BASE + [{"op": "present", "user": "alice", "cred": "c", "aids": [], "as": "p"},
            {"op": "present", "user": "alice", "cred": "c", "aids": [], "as": "p"}],
    BASE + [{"op": "guess_pin", "user": "alice", "pin": 1}],
    BASE + [{"op": "corrupt", "party": "U:alice", "level": 3}],
    BASE + [{"op": "register_issuer", "issuer": "alice"}],
], ids=["unknown-op", "pin-range", "dup-user", "dup-label", "guess-without-clone", "late-level3", "name-clash"])
def test_script_errors(script):
    with pytest.raises(hz.ScriptError):
        hz.run_scenario(script, 0)


def test_pin_already_known_is_a_script_error():
    script = BASE + [{"op": "clone_memory", "user": "alice"},
                     {"op": "guess_pin", "user": "alice", "pin": 1},
                     {"op": "guess_pin", "user": "alice", "pin": 1}]
    with pytest.raises(hz.ScriptError):
        hz.run_scenario(script, 0)


def test_export(tmp_path):
    r = hz.run_scenario(DEMO, 0)
    hz.export_jsonl(r, tmp_path / "t.jsonl")
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert len(lines) == len(r.transcript.messages)
    assert json.loads(lines[0])["routine"] == "Initialise"
    json.dumps(hz.outputs_jsonable(r.real))


def test_dropped_message_aborts_both_worlds_alike():
    script = BASE + [{"op": "drop_next", "sender": "U:alice", "receiver": "FREV"},
                     {"op": "issue", "user": "alice", "issuer": "gov", "aids": ["name"], "as": "d"},
                     {"op": "get_cids", "user": "alice"}]
    r = hz.run_scenario(script, 3)
    assert r.errors[4] == "Dropped"
    assert r.mismatches() == []


def test_small_random_batch_is_clean():
    root = Rng(11)
    for k in range(15):
        script = hz.random_honest_script(root.fork(f"s/{k}"))
        assert hz.audit_honest(script, hz.run_scenario(script, k)) == []


def test_single_leakage_row():
    got = hz.assert_leakage("AMS")
    assert got == hz.EXPECTED_DISCLOSURE["AMS"]


def test_leakage_violation_is_reported(monkeypatch):
    monkeypatch.setitem(hz.EXPECTED_DISCLOSURE, "RP", {**hz.EXPECTED_DISCLOSURE["RP"], "revoke": "yes"})
    with pytest.raises(hz.LeakViolation):
        hz.assert_leakage("RP")
