"""Canonical byte encodings shared by hashing, signing, and storage.

There is exactly one way to serialize every ledger value: integers are
fixed-width big-endian, byte strings carry a u32 length prefix, and JSON
payloads use sorted keys with no whitespace. Signatures and digests are
always computed over these bytes, so two nodes that agree on a value
agree on its hash.
"""

from __future__ import annotations

import json
import struct
from typing import Any


class DecodeError(ValueError):
    """Raised when bytes do not parse as the expected canonical form."""


def encode_u32(value: int) -> bytes:
    if not 0 <= value < 2**32:
        raise ValueError(f"u32 out of range: {value}")
    return struct.pack(">I", value)


def encode_u64(value: int) -> bytes:
    if not 0 <= value < 2**64:
        raise ValueError(f"u64 out of range: {value}")
    return struct.pack(">Q", value)


def encode_bytes(value: bytes) -> bytes:
    return encode_u32(len(value)) + value


def encode_str(value: str) -> bytes:
    return encode_bytes(value.encode("utf-8"))


class Reader:
    """Sequential decoder over one canonical byte string."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated input")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def bytes_(self) -> bytes:
        return self._take(self.u32())

    def str_(self) -> str:
        raw = self.bytes_()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid utf-8: {exc}") from exc

    def expect_tag(self, tag: bytes) -> None:
        if self._take(len(tag)) != tag:
            raise DecodeError(f"bad tag, expected {tag!r}")

    def done(self) -> bool:
        return self.pos == len(self.data)

    def require_done(self) -> None:
        if not self.done():
            raise DecodeError("trailing bytes after value")


def canonical_json(obj: Any) -> bytes:
    """Deterministic JSON rendering: sorted keys, no whitespace, UTF-8."""
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def decode_json(data: bytes) -> Any:
    try:
        return json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"invalid json payload: {exc}") from exc
