"""Mempool, block template assembly and nonce search."""
from __future__ import annotations

import hashlib
import heapq
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

from .crypto import Digest, PublicKey
from .encoding import U64_MAX
from .ledger.chain import ChainStore, TipUpdate
from .ledger.errors import TransactionError
from .ledger.model import Block, BlockHeader, OutPoint, Transaction, TxOutput, coinbase, make_block
from .ledger.validation import validate_transaction

MAX_DIFFICULTY_BITS = 40
NONCE_SPACE = U64_MAX + 1
# Nonces handed to each worker per round of a parallel search.
CHUNK_SIZE = 1 << 14


class ConflictsWithMempool(TransactionError):
    rule = "ConflictsWithMempool"


@dataclass(frozen=True)
class MempoolEntry:
    tx: Transaction
    fee: int
    seq: int

    @property
    def fee_rate(self) -> Fraction:
        return Fraction(self.fee, self.tx.size)


class _MempoolView:
    """Tip UTXO extended with the outputs of pending transactions."""

    def __init__(self, utxo, mempool: "Mempool"):
        self.utxo = utxo
        self.mempool = mempool

    def get(self, op: OutPoint) -> TxOutput | None:
        out = self.utxo.get(op)
        if out is not None:
            return out
        entry = self.mempool.entries.get(op.txid)
        if entry is not None and op.index < len(entry.tx.outputs):
            return entry.tx.outputs[op.index]
        return None

    def is_spent(self, op: OutPoint) -> bool:
        return self.utxo.is_spent(op)


class Mempool:
    """Pending transactions valid against the tip plus their pending parents.

    At most one entry may consume a given outpoint; the first one seen is kept.
    """

    def __init__(self) -> None:
        self.entries: dict[Digest, MempoolEntry] = {}
        self.spends: dict[OutPoint, Digest] = {}
        self._seq = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, txid: Digest) -> bool:
        return txid in self.entries

    def transactions(self) -> list[Transaction]:
        return [e.tx for e in sorted(self.entries.values(), key=lambda e: e.seq)]

    def submit(self, tx: Transaction, tip_utxo) -> bool:
        """Add ``tx``; True if newly added, False if already present.

        Raises ``TransactionError`` (including ``ConflictsWithMempool``) on rejection.
        """
        txid = tx.txid
        if txid in self.entries:
            return False
        for inp in tx.inputs:
            other = self.spends.get(inp.outpoint)
            if other is not None:
                raise ConflictsWithMempool(f"{inp.outpoint} already spent by pending {other.hex()}")
        fee = validate_transaction(tx, _MempoolView(tip_utxo, self))
        self.entries[txid] = MempoolEntry(tx, fee, self._seq)
        self._seq += 1
        for inp in tx.inputs:
            self.spends[inp.outpoint] = txid
        return True

    def parents(self, tx: Transaction) -> set[Digest]:
        return {i.source_txid for i in tx.inputs if i.source_txid in self.entries}

    def resync(self, tip_utxo, update: TipUpdate | None = None) -> list[Transaction]:
        """Rebuild against a new tip. Transactions evicted by a reorg are
        offered first, then surviving entries in arrival order. Returns the
        transactions dropped."""
        candidates = list(update.evicted) if update is not None else []
        candidates += self.transactions()
        self.entries.clear()
        self.spends.clear()
        dropped = []
        for tx in candidates:
            try:
                self.submit(tx, tip_utxo)
            except TransactionError:
                dropped.append(tx)
        return dropped


def assemble_template(mempool: Mempool, store: ChainStore, reward: int, coinbase_key: PublicKey,
                      max_txs: int = 1000, parent: Digest | None = None) -> Block:
    """Build an unmined block (nonce 0) on ``parent`` (default: the tip).

    Transactions go in descending fee rate (fee per serialized byte), ties by
    txid, with every pending parent placed before its children. The coinbase
    claims exactly ``reward`` plus the included fees.
    """
    parent = store.tip if parent is None else parent
    height = store.blocks[parent].height + 1
    entries = mempool.entries
    waiting = {txid: mempool.parents(e.tx) for txid, e in entries.items()}
    children: dict[Digest, list[Digest]] = {}
    for txid, parents in waiting.items():
        for p in parents:
            children.setdefault(p, []).append(txid)
    ready = [(-entries[t].fee_rate, t) for t, ps in waiting.items() if not ps]
    heapq.heapify(ready)
    chosen: list[Transaction] = []
    fees = 0
    while ready and len(chosen) < max_txs:
        _, txid = heapq.heappop(ready)
        entry = entries[txid]
        chosen.append(entry.tx)
        fees += entry.fee
        for child in children.get(txid, ()):
            waiting[child].discard(txid)
            if not waiting[child]:
                heapq.heappush(ready, (-entries[child].fee_rate, child))
    cb = coinbase(reward + fees, coinbase_key, height)
    return make_block(parent, height, [cb, *chosen], store.difficulty_bits)


@dataclass(frozen=True)
class MiningJob:
    header: BlockHeader
    start: int = 0
    stop: int = NONCE_SPACE

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.stop <= NONCE_SPACE:
            raise ValueError(f"empty or out-of-range nonce interval [{self.start}, {self.stop})")


@dataclass(frozen=True)
class MiningOutcome:
    found: int | None
    trials: int


def _scan(prefix: bytes, start: int, stop: int, bits: int) -> int | None:
    base = hashlib.sha256(prefix)
    shift = 256 - bits
    for nonce in range(start, stop):
        h = base.copy()
        h.update(nonce.to_bytes(8, "big"))
        if int.from_bytes(h.digest(), "big") >> shift == 0:
            return nonce
    return None


def mine(job: MiningJob, difficulty_bits: int | None = None, *, workers: int = 1,
         executor: Executor | None = None) -> MiningOutcome:
    """Find the smallest nonce in the job's interval meeting ``difficulty_bits``.

    ``trials`` counts the nonces from the interval start up to and including
    the winner, so it equals the work of a sequential scan for any worker
    count. With several workers the interval is consumed in rounds of
    adjacent chunks; the lowest hit of the first successful round wins.
    """
    bits = job.header.difficulty_bits if difficulty_bits is None else difficulty_bits
    if not 0 <= bits <= MAX_DIFFICULTY_BITS:
        raise ValueError(f"difficulty_bits must be in [0, {MAX_DIFFICULTY_BITS}]")
    if bits == 0:
        return MiningOutcome(job.start, 1)
    prefix = job.header.prefix()
    if workers <= 1:
        found = _scan(prefix, job.start, job.stop, bits)
    else:
        found = _parallel_scan(prefix, job.start, job.stop, bits, workers, executor)
    if found is None:
        return MiningOutcome(None, job.stop - job.start)
    return MiningOutcome(found, found - job.start + 1)


def _parallel_scan(prefix, start, stop, bits, workers, executor) -> int | None:
    own = executor is None
    pool = executor or ProcessPoolExecutor(max_workers=workers)
    try:
        base = start
        while base < stop:
            bounds = []
            for w in range(workers):
                lo = base + w * CHUNK_SIZE
                if lo >= stop:
                    break
                bounds.append((lo, min(lo + CHUNK_SIZE, stop)))
            futures = [pool.submit(_scan, prefix, lo, hi, bits) for lo, hi in bounds]
            hits = [n for n in (f.result() for f in futures) if n is not None]
            if hits:
                return min(hits)
            base = bounds[-1][1]
        return None
    finally:
        if own:
            pool.shutdown()


def mine_block(template: Block, *, workers: int = 1, executor: Executor | None = None) -> tuple[Block, MiningOutcome]:
    """Grind the template's nonce over the full 64-bit space."""
    outcome = mine(MiningJob(template.header), workers=workers, executor=executor)
    if outcome.found is None:
        raise RuntimeError("nonce space exhausted")
    return template.with_nonce(outcome.found), outcome

