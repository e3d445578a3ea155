"""Unspent-output sets, derived by replaying blocks."""
from __future__ import annotations

from collections.abc import Iterable, Iterator

from ..crypto import Digest, PublicKey
from ..encoding import u32, u64, var_bytes
from .model import Block, OutPoint, Transaction, TxOutput

UndoRecord = list[tuple[OutPoint, TxOutput]]


class UtxoSet:
    """Unspent outputs along one chain plus which outpoints that chain already spent.

    The spent record only serves to tell ``AlreadySpent`` apart from
    ``UnknownOutpoint``; balances come from ``unspent``.
    """

    def __init__(self, unspent: dict[OutPoint, TxOutput] | None = None,
                 spent: dict[OutPoint, Digest] | None = None):
        self.unspent: dict[OutPoint, TxOutput] = dict(unspent or {})
        self.spent: dict[OutPoint, Digest] = dict(spent or {})

    def copy(self) -> "UtxoSet":
        return UtxoSet(self.unspent, self.spent)

    def get(self, outpoint: OutPoint) -> TxOutput | None:
        return self.unspent.get(outpoint)

    def is_spent(self, outpoint: OutPoint) -> bool:
        return outpoint in self.spent

    def __contains__(self, outpoint: OutPoint) -> bool:
        return outpoint in self.unspent

    def __len__(self) -> int:
        return len(self.unspent)

    def __iter__(self) -> Iterator[tuple[OutPoint, TxOutput]]:
        return iter(self.unspent.items())

    def total_value(self) -> int:
        return sum(o.amount for o in self.unspent.values())

    def apply_transaction(self, tx: Transaction, undo: UndoRecord | None = None) -> None:
        txid = tx.txid
        for inp in tx.inputs:
            op = inp.outpoint
            out = self.unspent.pop(op)
            self.spent[op] = txid
            if undo is not None:
                undo.append((op, out))
        for i, out in enumerate(tx.outputs):
            self.unspent[OutPoint(txid, i)] = out

    def connect(self, block: Block) -> UndoRecord:
        """Apply an already validated block; return what it consumed."""
        undo: UndoRecord = []
        for tx in block.transactions:
            self.apply_transaction(tx, undo)
        return undo

    def disconnect(self, block: Block, undo: UndoRecord) -> None:
        # Unwind one transaction at a time: a later tx may consume outputs
        # created earlier in the same block.
        end = len(undo)
        for tx in reversed(block.transactions):
            for i in range(len(tx.outputs)):
                del self.unspent[OutPoint(tx.txid, i)]
            start = end - len(tx.inputs)
            for op, out in undo[start:end]:
                self.unspent[op] = out
                del self.spent[op]
            end = start

    def serialize(self) -> bytes:
        """Canonical bytes, sorted by outpoint, for equality checks."""
        parts = [u32(len(self.unspent))]
        for op in sorted(self.unspent):
            out = self.unspent[op]
            parts.append(op.txid + u32(op.index) + u64(out.amount) + var_bytes(out.recipient))
        parts.append(u32(len(self.spent)))
        for op in sorted(self.spent):
            parts.append(op.txid + u32(op.index) + self.spent[op])
        return b"".join(parts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UtxoSet):
            return NotImplemented
        return self.unspent == other.unspent and self.spent == other.spent

    @classmethod
    def from_blocks(cls, blocks: Iterable[Block]) -> "UtxoSet":
        utxo = cls()
        for block in blocks:
            utxo.connect(block)
        return utxo


class UtxoView:
    """Copy-on-write overlay used to validate a block or mempool candidate
    without touching the base set."""

    def __init__(self, base):
        self.base = base
        self.added: dict[OutPoint, TxOutput] = {}
        self.consumed: set[OutPoint] = set()

    def get(self, outpoint: OutPoint) -> TxOutput | None:
        if outpoint in self.consumed:
            return None
        out = self.added.get(outpoint)
        return out if out is not None else self.base.get(outpoint)

    def is_spent(self, outpoint: OutPoint) -> bool:
        return outpoint in self.consumed or self.base.is_spent(outpoint)

    def apply_transaction(self, tx: Transaction) -> None:
        for inp in tx.inputs:
            op = inp.outpoint
            self.consumed.add(op)
            self.added.pop(op, None)
        for i, out in enumerate(tx.outputs):
            self.added[OutPoint(tx.txid, i)] = out


def balance_of(utxo: UtxoSet, key: PublicKey) -> int:
    """Sum of unspent outputs paying ``key``; balances are never stored."""
    return sum(out.amount for out in utxo.unspent.values() if out.recipient == key)
