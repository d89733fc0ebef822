"""Canonical encoding and the metered message bus.

Every field is encoded by type: a ``Tag`` is one byte, an ``int`` is eight
bytes big-endian, ``bytes``/``str`` carry a four-byte length prefix, and a
sequence is a four-byte count followed by its items. Objects exposing
``wire()`` supply their own fixed layout. The same encoder feeds signing,
hashing and byte accounting, so the sizes reported by the bus are the sizes
that were actually signed.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Any, Iterator


class Tag(int):
    """One-byte message-type constant."""


TAG_ISSUE = Tag(1)
TAG_CIDS = Tag(2)
TAG_REV = Tag(3)
TAG_PRES = Tag(4)
TAG_VERIFY = Tag(5)
TAG_NOTIFY = Tag(6)


def u32(n: int) -> bytes:
    return n.to_bytes(4, "big")


def encode_field(v: Any) -> bytes:
    if isinstance(v, Tag):
        return bytes([int(v)])
    if isinstance(v, bool):
        return b"\x01" if v else b"\x00"
    if isinstance(v, int):
        return v.to_bytes(8, "big")
    if isinstance(v, (bytes, bytearray)):
        return u32(len(v)) + bytes(v)
    if isinstance(v, str):
        raw = v.encode()
        return u32(len(raw)) + raw
    if isinstance(v, (tuple, list)):
        return u32(len(v)) + b"".join(encode_field(x) for x in v)
    if hasattr(v, "wire"):
        return v.wire()
    raise TypeError(f"cannot encode {type(v).__name__}")


def canon(*fields: Any) -> bytes:
    return b"".join(encode_field(f) for f in fields)


class Reader:
    """Inverse of ``canon`` for the primitive field types."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def tag(self) -> int:
        return self.take(1)[0]

    def int(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def bytes(self) -> bytes:
        return self.take(int.from_bytes(self.take(4), "big"))

    def str(self) -> str:
        return self.bytes().decode()

    def count(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def done(self) -> bool:
        return self.pos == len(self.data)


# -- transport -----------------------------------------------------------------


class Dropped(Exception):
    """The adversary withheld a message."""


@dataclass
class Message:
    seq: int
    routine: str
    sid: int
    label: str
    sender: str
    receiver: str
    nbytes: int
    view: dict = field(default_factory=dict)
    metered: bool = True

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "routine": self.routine,
            "sid": self.sid,
            "label": self.label,
            "sender": self.sender,
            "receiver": self.receiver,
            "nbytes": self.nbytes,
            "metered": self.metered,
            "view": {k: _jsonable(v) for k, v in self.view.items()},
        }


def _jsonable(v: Any) -> Any:
    if isinstance(v, (bytes, bytearray)):
        return bytes(v).hex()
    if isinstance(v, (tuple, list, frozenset, set)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if hasattr(v, "to_json"):
        return v.to_json()
    return repr(v)


class Bus:
    """Carries and records every message between parties.

    Parties call ``send`` with the serialized bytes and a ``view``: the
    fields the receiver (and sender) learn from the message. The bus keeps
    the view, not the bytes, so multi-megabyte downloads stay cheap to log.
    """

    def __init__(self):
        self.messages: list[Message] = []
        self._stack: list[tuple[str, int]] = [("-", 0)]
        self._drops: list[tuple[str, str]] = []
        self.dropped: list[Message] = []

    @contextlib.contextmanager
    def routine(self, name: str, sid: int | None = None) -> Iterator[None]:
        self._stack.append((name, self._stack[-1][1] if sid is None else sid))
        try:
            yield
        finally:
            self._stack.pop()

    @property
    def current(self) -> tuple[str, int]:
        return self._stack[-1]

    def drop_next(self, sender: str, receiver: str) -> None:
        self._drops.append((sender, receiver))

    def send(self, sender: str, receiver: str, label: str, data: bytes | int,
             view: dict | None = None, metered: bool = True) -> None:
        routine, sid = self.current
        nbytes = data if isinstance(data, int) else len(data)
        msg = Message(len(self.messages) + len(self.dropped), routine, sid, label,
                      sender, receiver, nbytes, dict(view or {}), metered)
        if (sender, receiver) in self._drops:
            self._drops.remove((sender, receiver))
            self.dropped.append(msg)
            raise Dropped(f"{sender}->{receiver} {label}")
        self.messages.append(msg)

    def open(self, sender: str, receiver: str, view: dict) -> None:
        """Channel set-up. Logged for views but not counted as payload."""
        self.send(sender, receiver, "open", 0, view, metered=False)

    def total(self, routine: str | None = None, sid: int | None = None,
              start: int = 0) -> int:
        return sum(m.nbytes for m in self.messages[start:]
                   if m.metered and (routine is None or m.routine == routine)
                   and (sid is None or m.sid == sid))

    def by_label(self, routine: str, start: int = 0) -> dict[str, int]:
        out: dict[str, int] = {}
        for m in self.messages[start:]:
            if m.metered and m.routine == routine:
                out[m.label] = out.get(m.label, 0) + m.nbytes
        return out


class NullBus(Bus):
    """Bus that forgets everything; used when a caller does not care."""

    def send(self, sender, receiver, label, data, view=None, metered=True) -> None:
        if (sender, receiver) in self._drops:
            self._drops.remove((sender, receiver))
            raise Dropped(f"{sender}->{receiver} {label}")
