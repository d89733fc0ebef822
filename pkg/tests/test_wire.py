import pytest
from hypothesis import given
from hypothesis import strategies as st

from prettiness.wire import TAG_PRES, Bus, Dropped, NullBus, Reader, Tag, canon, encode_field


def test_field_encodings():
    assert encode_field(Tag(3)) == b"\x03"
    assert encode_field(5) == b"\x00" * 7 + b"\x05"
    assert encode_field(b"ab") == b"\x00\x00\x00\x02ab"
    assert encode_field("é") == b"\x00\x00\x00\x02\xc3\xa9"
    assert encode_field(True) == b"\x01"
    assert encode_field((1, b"")) == b"\x00\x00\x00\x02" + b"\x00" * 7 + b"\x01" + b"\x00" * 4


def test_unencodable():
    with pytest.raises(TypeError):
        encode_field(1.5)


@given(st.lists(st.binary(max_size=8), max_size=5), st.lists(st.binary(max_size=8), max_size=5))
def test_canon_injective_on_byte_fields(a, b):
    if a != b:
        assert canon(*a) != canon(*b)
        assert canon(tuple(a)) != canon(tuple(b))


@given(st.integers(0, 2**64 - 1), st.binary(max_size=50), st.text(max_size=20),
       st.lists(st.text(max_size=5), max_size=4))
def test_reader_roundtrip(n, raw, s, items):
    r = Reader(canon(TAG_PRES, n, raw, s, tuple(items)))
    assert r.tag() == int(TAG_PRES)
    assert (r.int(), r.bytes(), r.str()) == (n, raw, s)
    assert [r.str() for _ in range(r.count())] == items
    assert r.done()


def test_reader_truncated():
    with pytest.raises(ValueError):
        Reader(b"\x00\x00\x00\x05ab").bytes()


def test_bus_metering_and_routines():
    bus = Bus()
    with bus.routine("Issue", 4):
        bus.open("U", "ST", {"uid": "u"})
        bus.send("U", "ST", "a", b"xyz")
        with bus.routine("DBupdate"):
            bus.send("ST", "U", "b", 10)
    assert [m.routine for m in bus.messages] == ["Issue", "Issue", "DBupdate"]
    assert {m.sid for m in bus.messages} == {4}
    assert bus.total() == 13 and bus.total("Issue") == 3
    assert bus.by_label("DBupdate") == {"b": 10}
    assert bus.messages[0].to_json()["metered"] is False


def test_drop_only_hits_next_matching_message():
    bus = Bus()
    bus.drop_next("A", "B")
    bus.send("B", "A", "x", b"1")
    with pytest.raises(Dropped):
        bus.send("A", "B", "y", b"2")
    bus.send("A", "B", "z", b"3")
    assert [m.label for m in bus.messages] == ["x", "z"]
    assert [m.label for m in bus.dropped] == ["y"]


def test_null_bus_forgets_but_still_drops():
    bus = NullBus()
    bus.send("A", "B", "x", b"1")
    assert bus.messages == []
    bus.drop_next("A", "B")
    with pytest.raises(Dropped):
        bus.send("A", "B", "x", b"1")
