"""Consensus rules for transactions and blocks."""
from __future__ import annotations

from .. import crypto
from ..encoding import U64_MAX
from .errors import (
    AlreadySpent,
    BadCoinbase,
    BadCommitment,
    BadProofOfWork,
    BadSignature,
    DuplicateInput,
    MalformedTransaction,
    NegativeFee,
    TransactionError,
    UnknownOutpoint,
    ValueOverflow,
    WrongOwner,
)
from .model import Block, Transaction, meets_difficulty, tx_commitment
from .utxo import UtxoView

DEFAULT_BLOCK_REWARD = 50


def _check_outputs(tx: Transaction) -> int:
    if not tx.outputs:
        raise MalformedTransaction("transaction has no outputs")
    total = 0
    for i, out in enumerate(tx.outputs):
        if out.amount > U64_MAX:
            raise ValueOverflow(f"output {i} amount exceeds 64 bits")
        if out.amount <= 0:
            raise MalformedTransaction(f"output {i} amount must be positive")
        if len(out.recipient) != crypto.KEY_SIZE:
            raise MalformedTransaction(f"output {i} recipient is not a public key")
        total += out.amount
    if total > U64_MAX:
        raise ValueOverflow("output total exceeds 64 bits")
    return total


def validate_transaction(tx: Transaction, utxo) -> int:
    """Check a non-coinbase transaction against ``utxo`` and return its fee.

    ``utxo`` is anything offering ``get(outpoint)`` and ``is_spent(outpoint)``
    (a ``UtxoSet`` or an overlay). Raises a ``TransactionError`` subclass
    naming the first rule violated.
    """
    if tx.is_coinbase:
        raise BadCoinbase("input-less transaction outside the coinbase position")
    out_total = _check_outputs(tx)
    payload = tx.signing_payload
    seen = set()
    in_total = 0
    for i, inp in enumerate(tx.inputs):
        op = inp.outpoint
        if op in seen:
            raise DuplicateInput(f"input {i} references {op} twice")
        seen.add(op)
        prev = utxo.get(op)
        if prev is None:
            if utxo.is_spent(op):
                raise AlreadySpent(f"input {i} spends consumed output {op}")
            raise UnknownOutpoint(f"input {i} references unknown output {op}")
        if inp.spender_key != prev.recipient:
            raise WrongOwner(f"input {i} key does not own {op}")
        if not crypto.verify(inp.spender_key, payload, inp.signature):
            raise BadSignature(f"input {i} signature does not verify")
        in_total += prev.amount
    if in_total > U64_MAX:
        raise ValueOverflow("input total exceeds 64 bits")
    if in_total < out_total:
        raise NegativeFee(f"outputs {out_total} exceed inputs {in_total}")
    return in_total - out_total


def check_proof_of_work(block: Block, expected_difficulty: int) -> None:
    h = block.header
    if h.difficulty_bits != expected_difficulty:
        raise BadProofOfWork(
            f"header claims {h.difficulty_bits} bits, chain requires {expected_difficulty}"
        )
    if not meets_difficulty(block.digest, expected_difficulty):
        raise BadProofOfWork(f"digest {block.digest.hex()} lacks {expected_difficulty} leading zero bits")


def validate_block(block: Block, parent_state, expected_difficulty: int,
                   reward: int = DEFAULT_BLOCK_REWARD) -> int:
    """Validate ``block`` on top of ``parent_state``; return the total fees.

    ``parent_state`` is not modified. Transactions are checked in order so
    an earlier transaction may fund a later one.
    """
    check_proof_of_work(block, expected_difficulty)
    txs = block.transactions
    if block.header.tx_commitment != tx_commitment(txs):
        raise BadCommitment("tx_commitment does not match the transaction list")
    if not txs or not txs[0].is_coinbase:
        raise BadCoinbase("first transaction must be the coinbase")
    view = UtxoView(parent_state)
    fees = 0
    for index, tx in enumerate(txs[1:], start=1):
        try:
            fees += validate_transaction(tx, view)
        except TransactionError as exc:
            exc.tx_index = index
            raise
        except BadCoinbase as exc:
            exc.tx_index = index
            raise
        view.apply_transaction(tx)
    cb = txs[0]
    try:
        cb_total = _check_outputs(cb)
    except TransactionError as exc:
        raise BadCoinbase(str(exc), tx_index=0) from exc
    if cb_total > reward + fees:
        raise BadCoinbase(f"coinbase pays {cb_total}, allowed {reward + fees}", tx_index=0)
    return fees
