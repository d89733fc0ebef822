import pytest

from prettiness import parties as P
from prettiness.crypto_suite import TEST, Rng
from prettiness.wire import Bus

PIN = 1234


class World:
    """A small deployment with one user, one issuer and one relying party."""

    def __init__(self, seed=1, T0=3, delta=10**6):
        self.rng = Rng(seed)
        self.bus = Bus()
        self.dep = P.Deployment(P.Config(suite=TEST, T0=T0, delta=delta), self.rng.fork("dep"), self.bus)
        self.alice = P.initialise(self.dep, "alice", PIN, self.rng.fork("alice"))
        self.gov = self.dep.add_issuer("gov", self.rng.fork("gov"))
        self.shop = self.dep.add_rp("shop")
        self._n = 0

    def fork(self):
        self._n += 1
        return self.rng.fork(f"op/{self._n}")

    def issue(self, aids=("age", "name", "nationality"), user=None, pin=PIN):
        return P.issue(self.dep, user or self.alice, self.gov, aids, pin, self.fork())

    def present(self, cid, aids=("age",), user=None, pin=PIN):
        return P.present(self.dep, user or self.alice, cid, aids, pin, self.fork())

    def verify(self, cid, pres, aids=("age",), rp=None, user=None, pin=PIN):
        return P.verify(self.dep, user or self.alice, rp or self.shop, cid, aids, pres, pin, self.fork())


@pytest.fixture
def world():
    return World()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance")
    for num in sorted(mod.LINES):
        terminalreporter.write_line(mod.LINES[num])
