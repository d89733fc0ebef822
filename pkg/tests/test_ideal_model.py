import pytest

from prettiness.ideal_model import (IGNORED, Adversary, IdealSystem, InvalidTransition, TdecOracle, TsignOracle,
                                    canonical_cid)


class Approve(Adversary):
    def __init__(self):
        self.n = 0

    def issue_ok(self, sid, user, issuer, aids):
        return canonical_cid(sid.to_bytes(16, "big"), user, aids, issuer)

    def verify_ok(self, sid, user, rp):
        self.n += 1
        return self.n.to_bytes(32, "big")


def attributes(iid, uid, cid, aids):
    return [f"{a}:{uid}" for a in aids]


@pytest.fixture
def system():
    s = IdealSystem(Approve(), attributes)
    s.setup_user("alice")
    return s


def test_lifecycle(system):
    cid = system.issue(1, "alice", ("age", "name"), "gov")
    assert system.get_cids(2, "alice") == [cid]
    pres = system.present(3, "alice", cid, ("name",))
    assert pres.atrs == ("name:alice",)
    (p, ch), v = system.verify(4, "alice", pres, "shop")
    assert p == pres and v == 1
    assert system.revoke(5, "bob", cid) is None
    assert system.revoke(6, "gov", cid) == "ok"
    assert system.present(7, "alice", cid, ()) is None


def test_present_requires_owner_and_subset(system):
    cid = system.issue(1, "alice", ("age",), "gov")
    assert system.present(2, "bob", cid, ()) is None
    assert system.present(3, "alice", cid, ("name",)) is None
    assert system.present(4, "alice", cid, ("age", "age")) is None


def test_unknown_presentation_yields_nothing(system):
    cid = system.issue(1, "alice", ("age",), "gov")
    pres = system.present(2, "alice", cid, ("age",))
    system.T_v.clear()
    assert system.verify(3, "alice", pres, "shop") is None


def test_leaks_hide_aids_unless_issuer_or_ams_corrupted(system):
    system.issue(1, "alice", ("age", "name"), "gov")
    assert system.leaks[0] == ("issue-req", 1, "alice", "gov", 2)
    system.corrupt_party("AMS")
    system.issue(2, "alice", ("age",), "gov")
    assert ("issue-req", 2, "alice", "gov", ("age",)) in system.leaks


def test_corruption_levels(system):
    system.issue(1, "alice", ("age",), "gov")
    assert system.corrupt_user("alice") is None and system.c["alice"] == 1
    assert system.silent_request(2, "issue", "alice", {"aids": (), "issuer": "gov"}) == IGNORED
    t_a, t_r = system.corrupt_user("alice")
    assert len(t_a) == 1 and t_r == []
    with pytest.raises(InvalidTransition):
        system.corrupt_user("alice")
    assert system.silent_request(3, "issue", "alice", {"aids": (), "issuer": "gov"}) is not None
    with pytest.raises(InvalidTransition):
        system.corrupt_party("alice", is_user=True)


def test_tsign_pin_counter_and_lockout():
    t = TsignOracle()
    assert t.keygen("pk", 10, 4, 3)
    assert not t.keygen("pk", 10, 4, 3)
    assert t.sign_honest(b"m", 1, b"s") is None and t.T == 1
    assert t.sign_honest(b"m", 4, b"s") == b"s" and t.T == 0
    for _ in range(3):
        t.sign_honest(b"m", 0)
    assert t.b_OK == 0
    assert t.sign_honest(b"m", 4, b"s") is None


def test_tsign_clone_check_trips_on_alternation():
    t = TsignOracle()
    t.keygen("pk", 10, 4, 3)
    t.corrupt_client(1)
    assert t.sign_adversary(4)
    assert t.c_C == 2
    assert t.sign_honest(b"m", 4, b"s") is None
    assert t.b_OK == 0


def test_tsign_one_more_counter():
    t = TsignOracle()
    t.keygen("pk", 10, 4, 3)
    t.corrupt_client(1)
    t.sign_adversary(4)
    t.sign_adversary(4)
    got = [t.verify(b"m%d" % i, b"s", 1) for i in range(3)]
    assert got == [1, 1, 0]
    assert t.verify(b"m0", b"s", 0) == 1  # recorded answers stick


def test_tdec_counter():
    d = TdecOracle()
    d.encrypt(b"m", "c")
    assert d.decrypt_honest(lambda c: None, "c") == b"m"
    assert d.decrypt_honest(lambda c: b"x", "c", ver=lambda c: False) is None
    d.decrypt_corrupted_client("c")
    assert d.silent_decrypt(lambda c: None, "c") == b"m"
    assert d.silent_decrypt(lambda c: None, "c") is None
    assert d.verify("c", b"m") and not d.verify("c", b"n")
