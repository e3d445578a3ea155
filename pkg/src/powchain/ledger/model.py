"""Transactions, blocks and their canonical serialization.

Field order is fixed; integers are big-endian fixed width; byte strings
carry a 4-byte length prefix. Digests of these encodings define identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

from .. import crypto
from ..crypto import Digest, PublicKey, Signature
from ..encoding import Reader, u32, u64, var_bytes

ZERO_DIGEST = bytes(32)


class OutPoint(NamedTuple):
    txid: Digest
    index: int

    def __str__(self) -> str:
        return f"{self.txid.hex()}:{self.index}"


@dataclass(frozen=True)
class TxOutput:
    amount: int
    recipient: PublicKey

    def encode(self) -> bytes:
        return u64(self.amount) + var_bytes(self.recipient)


@dataclass(frozen=True)
class TxInput:
    source_txid: Digest
    source_index: int
    spender_key: PublicKey
    signature: Signature = b""

    @property
    def outpoint(self) -> OutPoint:
        return OutPoint(self.source_txid, self.source_index)

    def encode(self, with_signature: bool = True) -> bytes:
        sig = self.signature if with_signature else b""
        return (
            self.source_txid
            + u32(self.source_index)
            + var_bytes(self.spender_key)
            + var_bytes(sig)
        )


@dataclass(frozen=True)
class Transaction:
    inputs: tuple[TxInput, ...]
    outputs: tuple[TxOutput, ...]
    # Distinguishes otherwise identical coinbases; carries the block height.
    memo: bytes = b""

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))

    @property
    def is_coinbase(self) -> bool:
        return not self.inputs

    def _encode(self, with_signatures: bool) -> bytes:
        parts = [u32(len(self.inputs))]
        parts.extend(i.encode(with_signatures) for i in self.inputs)
        parts.append(u32(len(self.outputs)))
        parts.extend(o.encode() for o in self.outputs)
        parts.append(var_bytes(self.memo))
        return b"".join(parts)

    @cached_property
    def serialized(self) -> bytes:
        return self._encode(True)

    @cached_property
    def signing_payload(self) -> bytes:
        return self._encode(False)

    @cached_property
    def txid(self) -> Digest:
        return crypto.digest(self.serialized)

    @property
    def size(self) -> int:
        return len(self.serialized)

    def total_out(self) -> int:
        return sum(o.amount for o in self.outputs)

    @classmethod
    def decode(cls, reader: Reader) -> "Transaction":
        inputs = []
        for _ in range(reader.u32()):
            txid = reader.take(32)
            index = reader.u32()
            key = reader.var_bytes()
            sig = reader.var_bytes()
            inputs.append(TxInput(txid, index, key, sig))
        outputs = []
        for _ in range(reader.u32()):
            amount = reader.u64()
            outputs.append(TxOutput(amount, reader.var_bytes()))
        memo = reader.var_bytes()
        return cls(tuple(inputs), tuple(outputs), memo)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transaction":
        reader = Reader(data)
        tx = cls.decode(reader)
        reader.expect_end()
        return tx

    def signed(self, keys: dict[PublicKey, bytes]) -> "Transaction":
        """Return a copy whose every input is signed with the matching private key."""
        payload = self.signing_payload
        inputs = tuple(
            replace(i, signature=crypto.sign(keys[i.spender_key], payload)) for i in self.inputs
        )
        return replace(self, inputs=inputs)

    def to_dict(self) -> dict:
        return {
            "txid": self.txid.hex(),
            "coinbase": self.is_coinbase,
            "inputs": [
                {
                    "outpoint": str(i.outpoint),
                    "spender_key": i.spender_key.hex(),
                    "signature": i.signature.hex(),
                }
                for i in self.inputs
            ],
            "outputs": [{"amount": o.amount, "recipient": o.recipient.hex()} for o in self.outputs],
            "memo": self.memo.hex(),
        }


def signing_payload(tx: Transaction) -> bytes:
    """Canonical bytes of ``tx`` with every signature field emptied."""
    return tx.signing_payload


def coinbase(amount: int, recipient: PublicKey, height: int) -> Transaction:
    return Transaction((), (TxOutput(amount, recipient),), memo=b"height:" + u64(height))


def tx_commitment(transactions) -> Digest:
    return crypto.digest(b"".join(tx.txid for tx in transactions))


@dataclass(frozen=True)
class BlockHeader:
    prev_digest: Digest
    tx_commitment: Digest
    difficulty_bits: int
    height: int
    nonce: int = 0

    HEADER_SIZE = 32 + 32 + 4 + 8 + 8

    def prefix(self) -> bytes:
        """Header bytes preceding the nonce, which is encoded last."""
        return self.prev_digest + self.tx_commitment + u32(self.difficulty_bits) + u64(self.height)

    def encode(self) -> bytes:
        return self.prefix() + u64(self.nonce)

    @cached_property
    def digest(self) -> Digest:
        return crypto.digest(self.encode())

    @classmethod
    def decode(cls, reader: Reader) -> "BlockHeader":
        prev = reader.take(32)
        commit = reader.take(32)
        bits = reader.u32()
        height = reader.u64()
        nonce = reader.u64()
        return cls(prev, commit, bits, height, nonce)


def leading_zero_bits(d: Digest) -> int:
    value = int.from_bytes(d, "big")
    return len(d) * 8 - value.bit_length()


def meets_difficulty(d: Digest, bits: int) -> bool:
    return int.from_bytes(d, "big") >> (len(d) * 8 - bits) == 0 if bits else True


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "transactions", tuple(self.transactions))

    @property
    def digest(self) -> Digest:
        return self.header.digest

    @property
    def height(self) -> int:
        return self.header.height

    @property
    def prev_digest(self) -> Digest:
        return self.header.prev_digest

    def with_nonce(self, nonce: int) -> "Block":
        return replace(self, header=replace(self.header, nonce=nonce))

    def encode(self) -> bytes:
        parts = [self.header.encode(), u32(len(self.transactions))]
        parts.extend(var_bytes(tx.serialized) for tx in self.transactions)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        reader = Reader(data)
        header = BlockHeader.decode(reader)
        txs = []
        for _ in range(reader.u32()):
            txs.append(Transaction.from_bytes(reader.var_bytes()))
        reader.expect_end()
        return cls(header, tuple(txs))

    def to_dict(self) -> dict:
        h = self.header
        return {
            "digest": self.digest.hex(),
            "height": h.height,
            "prev_digest": h.prev_digest.hex(),
            "tx_commitment": h.tx_commitment.hex(),
            "difficulty_bits": h.difficulty_bits,
            "nonce": h.nonce,
            "leading_zero_bits": leading_zero_bits(self.digest),
            "transactions": [tx.to_dict() for tx in self.transactions],
        }


def make_block(prev: Digest, height: int, transactions, difficulty_bits: int, nonce: int = 0) -> Block:
    txs = tuple(transactions)
    header = BlockHeader(prev, tx_commitment(txs), difficulty_bits, height, nonce)
    return Block(header, txs)


# Genesis: exempt from proof of work, pays a fixed amount to a key derived
# from a published seed so fixtures are reproducible.
GENESIS_SEED = b"powchain genesis test key"
GENESIS_AMOUNT = 5000
GENESIS_KEY = crypto.generate_keypair(GENESIS_SEED)
GENESIS = make_block(ZERO_DIGEST, 0, (coinbase(GENESIS_AMOUNT, GENESIS_KEY.public_key, 0),), 0)
