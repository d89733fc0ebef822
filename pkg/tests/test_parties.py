import pytest

from prettiness import parties as P
from prettiness.crypto_suite import Rng

from conftest import PIN, World


def test_issue_stores_credential_and_backup(world):
    cid = world.issue()
    assert P.parse_summary(cid.summary) == ("alice", "gov", ("age", "name", "nationality"))
    assert cid in world.alice.db
    assert [e.cid for e in world.dep.ams.db["alice"]] == [cid]


def test_duplicate_user_and_bad_names(world):
    with pytest.raises(P.DuplicateUser):
        P.initialise(world.dep, "alice", 1, Rng(0))
    with pytest.raises(ValueError):
        P.initialise(world.dep, "bad:name", 1, Rng(0))


def test_present_then_verify(world):
    cid = world.issue()
    pres = world.present(cid, ("age", "name"))
    assert pres.aids == ("age", "name") and pres.iid == "gov"
    ch, res = world.verify(cid, pres, ("age", "name"))
    assert res.verdict == 1 and len(ch) == P.CH_BYTES


def test_present_rejects_bad_subset_and_unknown_cid(world):
    cid = world.issue(("age",))
    with pytest.raises(P.BadSubset):
        world.present(cid, ("name",))
    with pytest.raises(P.BadSubset):
        world.present(cid, ("age", "age"))
    ghost = P.CredentialId(bytes(16), cid.summary)
    with pytest.raises(P.UnknownCid):
        world.present(ghost)


def test_wrong_pin_is_auth_failure_and_logged(world):
    with pytest.raises(P.AuthFail):
        world.issue(pin=PIN + 1)
    assert world.dep.ams.log[-1].status.startswith("auth-failed")


@pytest.mark.parametrize("by_issuer", [False, True])
def test_revocation_blocks_present_and_fresh_verify(world, by_issuer):
    cid = world.issue()
    pres = world.present(cid)
    world.verify(cid, pres)
    if by_issuer:
        P.revoke_by_issuer(world.dep, world.gov, cid, world.fork())
    else:
        P.revoke_by_user(world.dep, world.alice, cid, PIN, world.fork())
    with pytest.raises(P.Revoked):
        world.present(cid)
    # The shop still holds the snapshot it fetched before the revocation.
    assert world.verify(cid, pres)[1].verdict == 1
    world.dep.registry.vnotify(world.shop.name)
    assert world.verify(cid, pres)[1] == P.VerifyResult(0, "revoked")


def test_replayed_bundle_is_stale(world):
    cid = world.issue()
    pres = world.present(cid)
    world.verify(cid, pres)
    bundle = world.shop.received[-1]
    with pytest.raises(P.StaleChallenge):
        P.replay_bundle(world.dep, world.shop, bundle, "A")


def test_get_cids_restores_wiped_device(world):
    a, b = world.issue(), world.issue(("email",))
    world.alice.db.clear()
    assert P.get_cids(world.dep, world.alice, PIN, world.fork()) == [a, b]
    assert set(world.alice.db) == {a, b}
    world.present(b, ("email",))


@pytest.mark.parametrize("mutation", ["omit", "modify", "reorder", "duplicate", "relabel"])
def test_tampered_backup_detected(world, mutation):
    world.issue()
    world.issue(("email",))
    world.dep.ams.tamper["backup"] = {"mutation": mutation, "index": 0}
    with pytest.raises(P.DigestMismatch):
        P.get_cids(world.dep, world.alice, PIN, world.fork())


def test_expiry_reanchors_backup():
    w = World(delta=10)
    old = w.issue()
    w.dep.ams.now = 50
    new = w.issue(("email",))
    assert P.expire(w.dep, 55) == 1
    assert P.get_cids(w.dep, w.alice, PIN, w.fork()) == [new]
    assert old not in w.alice.db
    # The device's digest is now anchored on the shorter list.
    w.dep.ams.tamper["backup"] = {"mutation": "omit"}
    with pytest.raises(P.DigestMismatch):
        P.get_cids(w.dep, w.alice, PIN, w.fork())


def test_log_is_opaque_to_ams_but_readable_by_user(world):
    cid = world.issue()
    world.present(cid, ("age", "name"))
    P.revoke_by_user(world.dep, world.alice, cid, PIN, world.fork())
    recs = [r for r in world.dep.ams.log if r.uid == "alice"]
    assert [r.tag for r in recs] == [1, 4, 3]
    assert recs[1].fields["n_dscl"] == 2 and "aids" not in recs[1].fields
    entries = P.read_log(world.dep, "alice")
    assert [e.routine for e in entries] == ["issue", "present", "revoke"]
    assert entries[1].details == {"cid": cid, "aids": ("age", "name")}
    assert entries[2].details["revoker"] == "alice"


def test_ams_never_sees_attribute_values(world):
    cid = world.issue()
    pres = world.present(cid, ("age", "name", "nationality"))
    world.verify(cid, pres, ("age", "name", "nationality"))
    secret = [v.encode() for v in pres.atrs]
    for m in world.bus.messages:
        if "AMS" in (m.sender, m.receiver):
            for v in m.view.values():
                blob = v if isinstance(v, bytes) else repr(v).encode()
                assert not any(s in blob for s in secret), (m.label, m.sender, m.receiver)


def test_invalid_attribute_value_refused(world):
    world.dep.validators["age"] = lambda aid, value: False
    with pytest.raises(P.MalformedAttribute):
        world.issue(("age",))
