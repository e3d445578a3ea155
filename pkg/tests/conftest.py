import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from powchain import crypto  # noqa: E402
from powchain.ledger import (  # noqa: E402
    GENESIS,
    GENESIS_KEY,
    ChainStore,
    OutPoint,
    Transaction,
    TxInput,
    TxOutput,
    coinbase,
    make_block,
)

KEYS = [crypto.generate_keypair(f"test-key-{i}".encode()) for i in range(6)]
PRIVATE = {k.public_key: k.private_key for k in KEYS}
PRIVATE[GENESIS_KEY.public_key] = GENESIS_KEY.private_key
GENESIS_OUT = OutPoint(GENESIS.transactions[0].txid, 0)


def spend(state, outpoints, outputs, memo=b""):
    """Signed tx spending ``outpoints`` (owners looked up in ``state``) to
    ``outputs`` given as (amount, public key) pairs."""
    inputs = []
    for op in outpoints:
        owner = state.get(op).recipient
        inputs.append(TxInput(op.txid, op.index, owner))
    tx = Transaction(tuple(inputs), tuple(TxOutput(a, k) for a, k in outputs), memo)
    return tx.signed(PRIVATE)


def child_block(store: ChainStore, parent=None, txs=(), miner=None, extra=0, nonce=0):
    """Block on ``parent`` whose coinbase claims reward + fees (+ ``extra``)."""
    parent = store.tip if parent is None else parent
    state = store.state_at(parent)
    created = {}
    fees = 0
    for tx in txs:
        ins = 0
        for i in tx.inputs:
            out = state.get(i.outpoint) or created.get(i.outpoint)
            ins += out.amount
        fees += ins - tx.total_out()
        for j, o in enumerate(tx.outputs):
            created[OutPoint(tx.txid, j)] = o
    height = store.blocks[parent].height + 1
    miner = miner or KEYS[0].public_key
    cb = coinbase(store.reward + fees + extra, miner, height)
    return make_block(parent, height, [cb, *txs], store.difficulty_bits, nonce)


@pytest.fixture
def store():
    return ChainStore(difficulty_bits=0, reward=50)


@pytest.fixture
def keys():
    return KEYS


def mined_chain(n_blocks: int, difficulty_bits: int, seed: int = 0) -> ChainStore:
    """A mined main chain of ``n_blocks`` beyond genesis carrying random payments."""
    import random

    from powchain.miner import Mempool, assemble_template, mine_block

    rng = random.Random(seed)
    s = ChainStore(difficulty_bits=difficulty_bits, reward=50)
    pool = Mempool()
    for _ in range(n_blocks):
        coins = sorted(op for op, out in s.utxo if out.recipient in PRIVATE)
        for op in rng.sample(coins, min(2, len(coins))):
            amount = s.utxo.get(op).amount
            fee = rng.randrange(0, min(3, amount))
            first = rng.randrange(1, amount - fee + 1)
            outs = [(first, rng.choice(KEYS).public_key)]
            if amount - fee - first:
                outs.append((amount - fee - first, rng.choice(KEYS).public_key))
            pool.submit(spend(s.utxo, [op], outs), s.utxo)
        template = assemble_template(pool, s, 50, rng.choice(KEYS).public_key)
        block, _ = mine_block(template)
        pool.resync(s.utxo, s.apply_block(block))
    return s


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
