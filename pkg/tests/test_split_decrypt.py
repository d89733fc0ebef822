import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prettiness import split_decrypt as td
from prettiness.crypto_suite import GROUP_2048, GROUP_TEST, TEST, Rng
from prettiness.wire import Bus


@pytest.fixture(scope="module")
def keys():
    return td.keygen("u", Rng(1), TEST)


@given(st.binary(max_size=200))
@settings(max_examples=25, deadline=None)
def test_roundtrip(keys, m):
    client, server = keys
    c, k = td.encrypt(client.pk, m, Rng(len(m)))
    server.allow(1)
    op = td.decrypt(client, server, c, Rng(9))
    assert op.m == m and op.k == k
    assert td.verify_decryption(c, op)
    assert td.decrypt_with_key(client, server, c) == op


def test_budget(keys):
    client, server = keys
    c, _ = td.encrypt(client.pk, b"m", Rng(2))
    server.close()
    with pytest.raises(td.ServerRefused):
        td.decrypt(client, server, c, Rng(3))
    server.allow(1)
    td.decrypt(client, server, c, Rng(3))
    with pytest.raises(td.ServerRefused):
        td.decrypt(client, server, c, Rng(3))


def test_tampered_tag(keys):
    client, server = keys
    c, k = td.encrypt(client.pk, b"hello", Rng(4))
    bad = td.Ciphertext(c.kem, c.c1, bytes([c.c2[0] ^ 1]) + c.c2[1:])
    with pytest.raises(td.TagMismatch):
        td.open_with_key(bad, k)
    assert not td.verify_decryption(c, td.Opening(b"hellp", k))


def test_server_sees_only_blinded_elements(keys):
    client, server = keys
    c, _ = td.encrypt(client.pk, b"secret", Rng(5))
    bus = Bus()
    server.allow(2)
    td.decrypt(client, server, c, Rng(6), bus=bus)
    td.decrypt(client, server, c, Rng(7), bus=bus)
    first, second = bus.messages[0].view["blinded_kem"], bus.messages[2].view["blinded_kem"]
    assert first != second and first != c.kem
    assert bus.total() == 2 * td.message_bytes_dec(GROUP_TEST)


def test_constants(keys):
    client, _ = keys
    c, _ = td.encrypt(client.pk, b"x" * 50, Rng(8))
    assert len(c.to_bytes()) - 50 == td.ciphertext_overhead(GROUP_TEST)
    assert td.ciphertext_overhead(GROUP_2048) == 288 and td.message_bytes_dec(GROUP_2048) == 512
    assert td.Ciphertext.from_bytes(c.to_bytes(), GROUP_TEST) == c
    with pytest.raises(ValueError):
        td.Ciphertext.from_bytes(b"short", GROUP_TEST)


def test_truncated_tag_admits_second_openings(keys):
    client, _ = keys
    keys8 = td.toy_keys(8)
    hits = 0
    for i in range(20):
        m = b"attr-%d" % i
        c, _ = td.encrypt(client.pk, m, Rng(100 + i), tag_len=1)
        found = td.second_openings(c, m, keys8)
        assert all(td.verify_decryption(c, op) and op.m != m for op in found)
        hits += len(found)
    assert 0 < hits < 20 * 256
