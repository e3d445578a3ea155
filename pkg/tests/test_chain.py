import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GENESIS_OUT, KEYS, PRIVATE, child_block, spend
from powchain.ledger import (
    GENESIS,
    BadHeight,
    ChainStore,
    OutPoint,
    UnknownParent,
    UtxoSet,
    audit,
    balance_of,
    confirmations,
    replay_chain,
)
from powchain.ledger.model import Block, make_block


def brute_force_utxo(blocks):
    """Unspent outputs by exhaustive scan of everything created and consumed."""
    created, consumed = {}, set()
    for b in blocks:
        for tx in b.transactions:
            consumed.update(i.outpoint for i in tx.inputs)
            for j, o in enumerate(tx.outputs):
                created[OutPoint(tx.txid, j)] = o
    return {op: o for op, o in created.items() if op not in consumed}


def extend(store, n, parent=None, miner=None):
    blocks = []
    for _ in range(n):
        b = child_block(store, parent=parent, miner=miner)
        store.apply_block(b)
        blocks.append(b)
        parent = b.digest
    return blocks


class TestApplyBlock:
    def test_extend_tip(self, store):
        b = child_block(store)
        update = store.apply_block(b)
        assert update.kind == "extended" and store.height == 1 and store.tip == b.digest
        assert update.applied == (b,)

    def test_equal_length_sibling_keeps_first_seen(self, store):
        first = child_block(store, miner=KEYS[0].public_key)
        second = child_block(store, miner=KEYS[1].public_key)
        store.apply_block(first)
        update = store.apply_block(second)
        assert update.kind == "unchanged" and store.tip == first.digest
        assert second.digest in store

    def test_duplicate_is_noop(self, store):
        b = child_block(store)
        store.apply_block(b)
        before = store.utxo.serialize()
        assert store.apply_block(b).kind == "unchanged"
        assert store.utxo.serialize() == before and store.height == 1

    def test_longer_branch_reorganizes(self, store):
        main = extend(store, 3, miner=KEYS[0].public_key)
        pay = spend(store.state_at(main[0].digest), [GENESIS_OUT], [(4990, KEYS[4].public_key)])
        fork = [child_block(store, parent=main[0].digest, txs=[pay], miner=KEYS[1].public_key)]
        store.apply_block(fork[0])
        fork.append(child_block(store, parent=fork[-1].digest, miner=KEYS[1].public_key))
        assert store.apply_block(fork[-1]).kind == "unchanged"  # equal height
        fork.append(child_block(store, parent=fork[-1].digest, miner=KEYS[1].public_key))
        update = store.apply_block(fork[-1])
        assert update.kind == "reorganized"
        assert [b.digest for b in update.rolled_back] == [b.digest for b in reversed(main[1:])]
        assert [b.digest for b in update.applied] == [b.digest for b in fork]
        chain = store.main_chain()
        assert store.utxo.unspent == brute_force_utxo(chain)
        assert replay_chain(chain, difficulty_bits=0).serialize() == store.utxo.serialize()
        assert balance_of(store.utxo, KEYS[4].public_key) == 4990

    def test_reorg_evicts_transactions(self, store):
        base = extend(store, 1)[0]
        pay = spend(store.utxo, [GENESIS_OUT], [(4999, KEYS[2].public_key)])
        a = child_block(store, txs=[pay])
        store.apply_block(a)
        b1 = child_block(store, parent=base.digest, miner=KEYS[3].public_key)
        store.apply_block(b1)
        b2 = child_block(store, parent=b1.digest, miner=KEYS[3].public_key)
        update = store.apply_block(b2)
        assert update.kind == "reorganized" and update.evicted == (pay,)
        assert store.confirmations(pay.txid) == 0

    def test_unknown_parent_buffered_then_connected(self, store):
        b1 = child_block(store)
        b2 = make_block(b1.digest, 2, [child_block(store).transactions[0].__class__(
            (), b1.transactions[0].outputs, b"x")], 0)
        with pytest.raises(UnknownParent):
            store.apply_block(b2)
        assert b2.digest in store.orphans and store.height == 0
        update = store.apply_block(b1)
        assert update.kind == "extended" and store.tip == b2.digest
        assert [b.digest for b in update.applied] == [b1.digest, b2.digest]
        assert not store.orphans

    def test_out_of_order_matches_in_order_oracle(self):
        ref = ChainStore()
        blocks = extend(ref, 8)
        shuffled = blocks[:]
        random.Random(3).shuffle(shuffled)
        other = ChainStore()
        for b in shuffled:
            try:
                other.apply_block(b)
            except UnknownParent:
                pass
        assert other.tip == ref.tip and other.utxo.serialize() == ref.utxo.serialize()

    def test_orphan_pool_is_bounded(self):
        s = ChainStore(orphan_limit=4)
        for i in range(10):
            b = make_block(bytes([i + 1]) * 32, 5, [child_block(s).transactions[0]], 0)
            with pytest.raises(UnknownParent):
                s.apply_block(b)
        assert len(s.orphans) == 4

    def test_invalid_orphan_dropped_when_parent_arrives(self, store):
        b1 = child_block(store)
        bad = child_block(store, extra=1)  # overpaying coinbase
        bad = make_block(b1.digest, 2, bad.transactions, 0)
        with pytest.raises(UnknownParent):
            store.apply_block(bad)
        store.apply_block(b1)
        assert store.tip == b1.digest and store.rejected == 1

    def test_wrong_height(self, store):
        b = child_block(store)
        bad = make_block(b.prev_digest, 2, b.transactions, 0)
        with pytest.raises(BadHeight):
            store.apply_block(bad)


class TestConfirmations:
    def test_depths(self, store):
        pay = spend(store.utxo, [GENESIS_OUT], [(5000, KEYS[2].public_key)])
        b = child_block(store, txs=[pay])
        store.apply_block(b)
        assert confirmations(store, pay.txid) == 1
        extend(store, 5)
        assert confirmations(store, pay.txid) == 6
        assert confirmations(store, b"\x00" * 32) == 0


class TestImmutability:
    def test_tampering_breaks_linkage(self, store):
        blocks = extend(store, 5)
        buried = blocks[1]
        data = bytearray(buried.encode())
        data[40] ^= 0x01  # inside tx_commitment
        tampered = Block.from_bytes(bytes(data))
        assert tampered.digest != buried.digest
        assert blocks[2].prev_digest != tampered.digest

    def test_every_header_byte_changes_digest(self, store):
        b = extend(store, 1)[0]
        raw = b.header.encode()
        for i in range(len(raw)):
            flipped = bytearray(b.encode())
            flipped[i] ^= 0x80
            assert Block.from_bytes(bytes(flipped)).digest != b.digest


def grow_random_tree(seed: int, n_blocks: int):
    """Random block tree with random spends; returns (store, blocks in insertion order)."""
    rng = random.Random(seed)
    store = ChainStore()
    inserted = []
    for _ in range(n_blocks):
        parents = list(store.blocks)
        parent = rng.choice(parents[-6:]) if rng.random() < 0.8 else rng.choice(parents)
        state = store.state_at(parent)
        coins = sorted(op for op, out in state if out.recipient in PRIVATE)
        txs = []
        view = state.copy()
        for _ in range(rng.randrange(0, 3)):
            coins = sorted(op for op, out in view if out.recipient in PRIVATE)
            if not coins:
                break
            picked = rng.sample(coins, min(len(coins), rng.randrange(1, 3)))
            total = sum(view.get(op).amount for op in picked)
            fee = rng.randrange(0, min(3, total))
            left = total - fee
            first = rng.randrange(1, left + 1)
            outs = [(first, rng.choice(KEYS).public_key)]
            if left - first:
                outs.append((left - first, rng.choice(KEYS).public_key))
            tx = spend(view, picked, outs)
            view.apply_transaction(tx)
            txs.append(tx)
        block = child_block(store, parent=parent, txs=txs, miner=rng.choice(KEYS).public_key)
        store.apply_block(block)
        inserted.append(block)
    return store, inserted


class TestRandomTrees:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32), n=st.integers(1, 50))
    def test_replay_equivalence(self, seed, n):
        store, _ = grow_random_tree(seed, n)
        chain = store.main_chain()
        assert store.utxo.unspent == brute_force_utxo(chain)
        assert UtxoSet.from_blocks(chain).serialize() == store.utxo.serialize()
        assert audit(store) == []
        # tip is a deepest leaf
        assert store.height == max(store.blocks[d].height for d in store.leaves())

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**32))
    def test_fork_choice_is_deterministic(self, seed):
        a, blocks = grow_random_tree(seed, 30)
        b = ChainStore()
        for blk in blocks:
            b.apply_block(blk)
        assert a.tip == b.tip
        assert a.utxo.serialize() == b.utxo.serialize()

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**32))
    def test_no_outpoint_spent_twice(self, seed):
        store, _ = grow_random_tree(seed, 40)
        seen = set()
        for blk in store.main_chain():
            for tx in blk.transactions:
                for i in tx.inputs:
                    assert i.outpoint not in seen
                    seen.add(i.outpoint)

    def test_conservation(self):
        store, _ = grow_random_tree(11, 50)
        chain = store.main_chain()
        minted = GENESIS.transactions[0].total_out() + store.reward * (len(chain) - 1)
        fees_claimed = sum(b.transactions[0].total_out() for b in chain[1:]) - store.reward * (len(chain) - 1)
        assert fees_claimed >= 0
        assert store.utxo.total_value() == minted
        assert sum(balance_of(store.utxo, k) for k in {o.recipient for _, o in store.utxo}) == minted


def test_snapshot_is_isolated(store):
    snap = store.snapshot()
    extend(store, 2)
    assert snap.height == 0 and snap.tip == GENESIS.digest
    assert snap.utxo.serialize() == UtxoSet.from_blocks([GENESIS]).serialize()
