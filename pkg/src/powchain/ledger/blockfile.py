"""Append-only block store file with a text index.

File layout::

    magic "POWCHAIN" | u32 version | u32 difficulty_bits | u64 block_reward
    then repeated records: u32 length | canonical block bytes

The companion ``<store>.idx`` holds ``<hex digest> <record offset>`` lines.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from ..encoding import DecodeError, Reader, u32, u64
from .chain import ChainVerificationError, replay_chain
from .model import Block
from .utxo import UtxoSet

MAGIC = b"POWCHAIN"
VERSION = 1
HEADER_SIZE = len(MAGIC) + 4 + 4 + 8


class StoreFormatError(ValueError):
    pass


@dataclass(frozen=True)
class StoreHeader:
    version: int
    difficulty_bits: int
    reward: int

    def encode(self) -> bytes:
        return MAGIC + u32(self.version) + u32(self.difficulty_bits) + u64(self.reward)


@dataclass(frozen=True)
class Record:
    offset: int
    payload: bytes


def index_path(store: str | os.PathLike) -> Path:
    p = Path(store)
    return p.with_name(p.name + ".idx")


class BlockFile:
    """Writer side. Records are only ever appended."""

    def __init__(self, path: str | os.PathLike, *, difficulty_bits: int, reward: int):
        self.path = Path(path)
        self.index = index_path(self.path)
        header = StoreHeader(VERSION, difficulty_bits, reward)
        if not self.path.exists():
            self.path.write_bytes(header.encode())
            self.index.write_text("")
        else:
            existing = read_header(self.path.read_bytes())
            if existing != header:
                raise StoreFormatError(f"{self.path} was created with different parameters")

    def append(self, block: Block) -> int:
        data = block.encode()
        with open(self.path, "ab") as fh:
            offset = fh.seek(0, os.SEEK_END)
            fh.write(u32(len(data)) + data)
        with open(self.index, "a") as fh:
            fh.write(f"{block.digest.hex()} {offset}\n")
        return offset

    def extend(self, blocks) -> None:
        for b in blocks:
            self.append(b)


def write_chain(path: str | os.PathLike, blocks, *, difficulty_bits: int, reward: int) -> None:
    """Write ``blocks`` to a fresh store, replacing any existing file."""
    path = Path(path)
    for p in (path, index_path(path)):
        if p.exists():
            p.unlink()
    BlockFile(path, difficulty_bits=difficulty_bits, reward=reward).extend(blocks)


def read_header(data: bytes) -> StoreHeader:
    if len(data) < HEADER_SIZE or data[: len(MAGIC)] != MAGIC:
        raise StoreFormatError("not a block store (bad magic)")
    r = Reader(data, len(MAGIC))
    header = StoreHeader(r.u32(), r.u32(), r.u64())
    if header.version != VERSION:
        raise StoreFormatError(f"unsupported store version {header.version}")
    return header


def iter_records(data: bytes):
    """Yield framed records; a broken frame raises ``DecodeError``."""
    r = Reader(data, HEADER_SIZE)
    while not r.done():
        offset = r.pos
        n = r.u32()
        yield Record(offset, r.take(n))


def read_index(store: str | os.PathLike) -> dict[int, str]:
    """Map record offset to the hex digest recorded at write time."""
    path = index_path(store)
    if not path.exists():
        return {}
    out = {}
    for line in path.read_text().splitlines():
        if line.strip():
            digest_hex, offset = line.split()
            out[int(offset)] = digest_hex
    return out


def load_blocks(store: str | os.PathLike) -> tuple[StoreHeader, list[Block]]:
    data = Path(store).read_bytes()
    header = read_header(data)
    return header, [Block.from_bytes(rec.payload) for rec in iter_records(data)]


def verify_store(store: str | os.PathLike) -> tuple[StoreHeader, list[Block], UtxoSet]:
    """Fully revalidate a store from genesis.

    Records are checked in file order: framing, decoding, agreement with the
    index digest, linkage to the previous record, then consensus rules. The
    first failure raises ``ChainVerificationError`` naming that record; its
    digest is the one the index recorded when available, i.e. the identity
    the block had before any tampering.
    """
    data = Path(store).read_bytes()
    header = read_header(data)
    index = read_index(store)
    blocks: list[Block] = []
    r = Reader(data, HEADER_SIZE)
    position = 0
    while not r.done():
        offset = r.pos
        recorded = bytes.fromhex(index[offset]) if offset in index else None
        try:
            payload = r.take(r.u32())
            block = Block.from_bytes(payload)
        except DecodeError as exc:
            raise ChainVerificationError(position, recorded, f"undecodable record at offset {offset}: {exc}") from exc
        if recorded is not None and block.digest != recorded:
            raise ChainVerificationError(
                position, recorded,
                f"content hashes to {block.digest.hex()}, index recorded {recorded.hex()}",
            )
        blocks.append(block)
        position += 1
    if index and len(index) != len(blocks):
        raise ChainVerificationError(len(blocks), None, f"index lists {len(index)} blocks, store holds {len(blocks)}")
    utxo = replay_chain(blocks, difficulty_bits=header.difficulty_bits, reward=header.reward)
    return header, blocks, utxo


def dump_block(block: Block) -> str:
    return json.dumps(block.to_dict(), indent=2)
