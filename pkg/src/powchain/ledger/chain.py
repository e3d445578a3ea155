"""Block tree with longest-chain fork choice, reorgs and confirmation depth."""
from __future__ import annotations

import itertools
from collections import OrderedDict, defaultdict
from dataclasses import dataclass
from typing import Sequence

from ..crypto import Digest
from .errors import BadGenesis, BadHeight, UnknownParent, ValidationError
from .model import GENESIS, Block, Transaction
from .utxo import UndoRecord, UtxoSet
from .validation import DEFAULT_BLOCK_REWARD, validate_block

ORPHAN_LIMIT = 1024


@dataclass(frozen=True)
class TipUpdate:
    kind: str  # "unchanged" | "extended" | "reorganized"
    old_tip: Digest
    new_tip: Digest
    rolled_back: tuple[Block, ...] = ()
    applied: tuple[Block, ...] = ()
    evicted: tuple[Transaction, ...] = ()

    @property
    def reorg_depth(self) -> int:
        return len(self.rolled_back)


@dataclass(frozen=True)
class ChainSnapshot:
    tip: Digest
    height: int
    utxo: UtxoSet


class ChainStore:
    """All valid blocks seen, organised as a tree rooted at genesis.

    Every block in the tree has been fully validated against the UTXO state
    of its parent, so switching branches never fails. The tip is the deepest
    block; among equally deep blocks the first one inserted wins.

    Single writer. Readers wanting a stable view take ``snapshot()``.
    """

    def __init__(self, *, difficulty_bits: int = 0, reward: int = DEFAULT_BLOCK_REWARD,
                 genesis: Block = GENESIS, orphan_limit: int = ORPHAN_LIMIT):
        self.difficulty_bits = difficulty_bits
        self.reward = reward
        self.genesis = genesis
        self.orphan_limit = orphan_limit
        self.blocks: dict[Digest, Block] = {genesis.digest: genesis}
        self.children: dict[Digest, list[Digest]] = defaultdict(list)
        self.arrival: dict[Digest, int] = {genesis.digest: 0}
        self._seq = itertools.count(1)
        self.main: list[Digest] = [genesis.digest]
        self.utxo = UtxoSet()
        self.undo: dict[Digest, UndoRecord] = {genesis.digest: self.utxo.connect(genesis)}
        self.tx_index: dict[Digest, list[Digest]] = defaultdict(list)
        for tx in genesis.transactions:
            self.tx_index[tx.txid].append(genesis.digest)
        self.orphans: OrderedDict[Digest, Block] = OrderedDict()
        self.orphans_by_parent: dict[Digest, list[Digest]] = defaultdict(list)
        self.rejected = 0

    # -- queries ---------------------------------------------------------

    @property
    def tip(self) -> Digest:
        return self.main[-1]

    @property
    def height(self) -> int:
        return len(self.main) - 1

    @property
    def tip_block(self) -> Block:
        return self.blocks[self.tip]

    def __contains__(self, digest: Digest) -> bool:
        return digest in self.blocks

    def on_main_chain(self, digest: Digest) -> bool:
        block = self.blocks.get(digest)
        if block is None:
            return False
        h = block.height
        return h < len(self.main) and self.main[h] == digest

    def main_chain(self) -> list[Block]:
        return [self.blocks[d] for d in self.main]

    def leaves(self) -> list[Digest]:
        return [d for d in self.blocks if not self.children.get(d)]

    def confirmations(self, txid: Digest) -> int:
        """Depth of ``txid`` on the tip chain: 1 in the tip block, 0 if absent."""
        for d in self.tx_index.get(txid, ()):
            if self.on_main_chain(d):
                return self.height - self.blocks[d].height + 1
        return 0

    def containing_block(self, txid: Digest) -> Block | None:
        for d in self.tx_index.get(txid, ()):
            if self.on_main_chain(d):
                return self.blocks[d]
        return None

    def snapshot(self) -> ChainSnapshot:
        return ChainSnapshot(self.tip, self.height, self.utxo.copy())

    def fork_point(self, digest: Digest) -> Digest:
        """Deepest main-chain ancestor of ``digest`` (itself if on the main chain)."""
        d = digest
        while not self.on_main_chain(d):
            d = self.blocks[d].prev_digest
        return d

    def branch(self, digest: Digest, stop: Digest) -> list[Block]:
        """Blocks from just above ``stop`` up to ``digest``, oldest first."""
        path = []
        d = digest
        while d != stop:
            block = self.blocks[d]
            path.append(block)
            d = block.prev_digest
        path.reverse()
        return path

    def state_at(self, digest: Digest) -> UtxoSet:
        """UTXO set after ``digest``. The live set is returned for the tip;
        callers must treat it as read-only."""
        if digest == self.tip:
            return self.utxo
        fork = self.fork_point(digest)
        state = self.utxo.copy()
        for d in reversed(self.main[self.blocks[fork].height + 1:]):
            state.disconnect(self.blocks[d], self.undo[d])
        for block in self.branch(digest, fork):
            state.connect(block)
        return state

    # -- mutation --------------------------------------------------------

    def apply_block(self, block: Block) -> TipUpdate:
        """Insert ``block`` and re-run fork choice.

        Duplicates are a no-op. A block with an unknown parent is buffered
        and ``UnknownParent`` raised; it is connected when the parent
        arrives. Invalid blocks raise a ``ValidationError``.
        """
        digest = block.digest
        old_tip = self.tip
        if digest in self.blocks or digest in self.orphans:
            return TipUpdate("unchanged", old_tip, old_tip)
        if block.prev_digest not in self.blocks:
            self._buffer_orphan(block)
            raise UnknownParent(f"parent {block.prev_digest.hex()} not known; block buffered")
        self._insert(block)
        self._connect_orphans(digest)
        return self._tip_update(old_tip)

    def _insert(self, block: Block) -> None:
        parent = self.blocks[block.prev_digest]
        if block.height != parent.height + 1:
            raise BadHeight(f"height {block.height} after parent height {parent.height}")
        validate_block(block, self.state_at(parent.digest), self.difficulty_bits, self.reward)
        digest = block.digest
        self.blocks[digest] = block
        self.arrival[digest] = next(self._seq)
        self.children[block.prev_digest].append(digest)
        for tx in block.transactions:
            self.tx_index[tx.txid].append(digest)
        # Strictly deeper only: equal height keeps the first-seen tip.
        if block.height > self.height:
            self._reorganize(digest)

    def _reorganize(self, new_tip: Digest) -> None:
        fork = self.fork_point(new_tip)
        fork_height = self.blocks[fork].height
        while self.height > fork_height:
            d = self.main.pop()
            self.utxo.disconnect(self.blocks[d], self.undo.pop(d))
        for block in self.branch(new_tip, fork):
            self.undo[block.digest] = self.utxo.connect(block)
            self.main.append(block.digest)

    def _buffer_orphan(self, block: Block) -> None:
        if len(self.orphans) >= self.orphan_limit:
            old_digest, old = self.orphans.popitem(last=False)
            siblings = self.orphans_by_parent.get(old.prev_digest, [])
            if old_digest in siblings:
                siblings.remove(old_digest)
        self.orphans[block.digest] = block
        self.orphans_by_parent[block.prev_digest].append(block.digest)

    def _connect_orphans(self, parent: Digest) -> None:
        pending = [parent]
        while pending:
            p = pending.pop(0)
            for child_digest in self.orphans_by_parent.pop(p, []):
                child = self.orphans.pop(child_digest, None)
                if child is None:
                    continue
                try:
                    self._insert(child)
                except ValidationError:
                    self.rejected += 1
                    continue
                pending.append(child_digest)

    def _tip_update(self, old_tip: Digest) -> TipUpdate:
        new_tip = self.tip
        if new_tip == old_tip:
            return TipUpdate("unchanged", old_tip, new_tip)
        fork = self.fork_point(old_tip)
        rolled_back = tuple(reversed(self.branch(old_tip, fork)))
        applied = tuple(self.main_chain()[self.blocks[fork].height + 1:])
        if not rolled_back:
            return TipUpdate("extended", old_tip, new_tip, applied=applied)
        kept = {tx.txid for b in applied for tx in b.transactions}
        evicted = tuple(
            tx
            for b in reversed(rolled_back)
            for tx in b.transactions[1:]
            if tx.txid not in kept
        )
        return TipUpdate("reorganized", old_tip, new_tip, rolled_back, applied, evicted)


def apply_block(store: ChainStore, block: Block) -> TipUpdate:
    return store.apply_block(block)


def confirmations(store: ChainStore, txid: Digest) -> int:
    return store.confirmations(txid)


class ChainVerificationError(Exception):
    """A block sequence failed full replay; ``position`` is its index."""

    def __init__(self, position: int, digest: Digest | None, reason: str):
        self.position = position
        self.digest = digest
        self.reason = reason
        where = digest.hex() if digest else "?"
        super().__init__(f"block #{position} ({where}): {reason}")


def replay_chain(blocks: Sequence[Block], *, difficulty_bits: int,
                 reward: int = DEFAULT_BLOCK_REWARD, genesis: Block = GENESIS) -> UtxoSet:
    """Validate a linear chain from genesis, rebuilding its UTXO set from scratch."""
    utxo = UtxoSet()
    if not blocks or blocks[0].encode() != genesis.encode():
        d = blocks[0].digest if blocks else None
        raise ChainVerificationError(0, d, str(BadGenesis("first block is not the genesis block")))
    utxo.connect(blocks[0])
    for i, block in enumerate(blocks[1:], start=1):
        prev = blocks[i - 1]
        if block.prev_digest != prev.digest:
            raise ChainVerificationError(i, block.digest, "prev_digest does not link to the preceding block")
        if block.height != i:
            raise ChainVerificationError(i, block.digest, f"height {block.height}, expected {i}")
        try:
            validate_block(block, utxo, difficulty_bits, reward)
        except ValidationError as exc:
            raise ChainVerificationError(i, block.digest, str(exc)) from exc
        utxo.connect(block)
    return utxo


def audit(store: ChainStore) -> list[str]:
    """Recheck conservation, single spending and replay equivalence for the
    store's main chain. Returns a list of problems (empty when sound)."""
    problems = []
    chain = store.main_chain()
    try:
        rebuilt = replay_chain(chain, difficulty_bits=store.difficulty_bits,
                               reward=store.reward, genesis=store.genesis)
    except ChainVerificationError as exc:
        return [f"replay failed: {exc}"]
    if rebuilt.serialize() != store.utxo.serialize():
        problems.append("incremental UTXO differs from genesis replay")
    # Fees move existing coin to the miner, so only the subsidy part of each
    # coinbase adds to the supply.
    outputs = {}
    spent_once: set = set()
    minted = 0
    for b in chain:
        fees = 0
        for tx in b.transactions:
            for inp in tx.inputs:
                if inp.outpoint in spent_once:
                    problems.append(f"outpoint {inp.outpoint} spent twice")
                spent_once.add(inp.outpoint)
                fees += outputs[inp.outpoint]
            fees -= tx.total_out() if not tx.is_coinbase else 0
            for i, out in enumerate(tx.outputs):
                outputs[(tx.txid, i)] = out.amount
        subsidy = b.transactions[0].total_out() - fees
        if b.height and subsidy > store.reward:
            problems.append(f"block {b.height} mints {subsidy} > reward {store.reward}")
        minted += subsidy
    if store.utxo.total_value() != minted:
        problems.append(f"UTXO value {store.utxo.total_value()} != minted supply {minted}")
    return problems
