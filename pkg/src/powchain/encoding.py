"""Canonical byte encoding: big-endian fixed-width integers and
length-prefixed byte strings."""
from __future__ import annotations

U32_MAX = (1 << 32) - 1
U64_MAX = (1 << 64) - 1


class DecodeError(ValueError):
    pass


def u32(value: int) -> bytes:
    return value.to_bytes(4, "big")


def u64(value: int) -> bytes:
    return value.to_bytes(8, "big")


def var_bytes(data: bytes) -> bytes:
    return u32(len(data)) + data


class Reader:
    """Cursor over a byte string; every read is bounds-checked."""

    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.pos = offset

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self.data):
            raise DecodeError(f"truncated: need {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def var_bytes(self, limit: int = 1 << 20) -> bytes:
        n = self.u32()
        if n > limit:
            raise DecodeError(f"length {n} exceeds limit {limit}")
        return self.take(n)

    def done(self) -> bool:
        return self.pos == len(self.data)

    def expect_end(self) -> None:
        if not self.done():
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes")
