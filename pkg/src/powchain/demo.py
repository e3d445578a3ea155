"""Scripted Alice -> Bob payment of 30 coins, from mining to six confirmations."""
from __future__ import annotations

from dataclasses import dataclass, field

from . import crypto
from .ledger import ChainStore, Transaction, TxInput, TxOutput, balance_of
from .ledger.model import Block, OutPoint
from .miner import Mempool, assemble_template, mine_block

SAFE_DEPTH = 6
REWARD = 50


@dataclass
class Walkthrough:
    store: ChainStore
    lines: list[str] = field(default_factory=list)
    payment_txid: bytes = b""

    def say(self, text: str) -> None:
        self.lines.append(text)


def _seeded(name: str) -> crypto.KeyPair:
    return crypto.generate_keypair(f"demo:{name}".encode())


def walkthrough(difficulty_bits: int = 12) -> Walkthrough:
    store = ChainStore(difficulty_bits=difficulty_bits, reward=REWARD)
    mempool = Mempool()
    w = Walkthrough(store)
    charlie, alice, bob_fresh = _seeded("charlie"), _seeded("alice"), _seeded("bob-1")
    charlie_change = _seeded("charlie-change")

    def mine_next(miner_key: bytes) -> Block:
        template = assemble_template(mempool, store, REWARD, miner_key)
        block, outcome = mine_block(template)
        update = store.apply_block(block)
        mempool.resync(store.utxo, update)
        w.say(f"  block {block.height} mined: nonce={block.header.nonce} trials={outcome.trials} "
              f"digest={block.digest.hex()}")
        return block

    w.say(f"[1] Keys: charlie={charlie.public_hex[:16]}.. alice={alice.public_hex[:16]}..")
    w.say(f"[2] Charlie mines a block (difficulty {difficulty_bits} leading zero bits) for the {REWARD}-coin reward")
    b1 = mine_next(charlie.public_key)
    reward_out = OutPoint(b1.transactions[0].txid, 0)

    w.say("[3] Charlie pays Alice 30 coins (20 change back to Charlie)")
    to_alice = Transaction(
        (TxInput(reward_out.txid, reward_out.index, charlie.public_key),),
        (TxOutput(30, alice.public_key), TxOutput(20, charlie_change.public_key)),
    ).signed({charlie.public_key: charlie.private_key})
    mempool.submit(to_alice, store.utxo)
    mine_next(charlie.public_key)
    w.say(f"  alice balance: {balance_of(store.utxo, alice.public_key)}")

    w.say("[4] Bob challenges Alice to prove she owns the 30-coin output")
    challenge = crypto.Challenge.fresh()
    response = crypto.prove_ownership(alice.private_key, challenge)
    ok = crypto.verify_ownership(store.utxo.get(OutPoint(to_alice.txid, 0)).recipient, challenge, response)
    w.say(f"  ownership proof verified: {ok}")
    if not ok:
        raise RuntimeError("ownership proof failed")

    w.say(f"[5] Bob hands Alice a fresh public key: {bob_fresh.public_hex[:16]}..")
    payment = Transaction(
        (TxInput(to_alice.txid, 0, alice.public_key),),
        (TxOutput(30, bob_fresh.public_key),),
    ).signed({alice.public_key: alice.private_key})
    w.payment_txid = payment.txid
    mempool.submit(payment, store.utxo)
    w.say(f"[6] Alice broadcasts payment {payment.txid.hex()[:16]}..: accepted into mempool "
          f"(fee {mempool.entries[payment.txid].fee})")

    w.say("[7] Charlie confirms the payment by mining it into a block")
    mine_next(charlie.public_key)
    w.say(f"  confirmations: {store.confirmations(payment.txid)}")

    w.say(f"[8] Bob waits until the payment is {SAFE_DEPTH} blocks deep")
    while store.confirmations(payment.txid) < SAFE_DEPTH:
        mine_next(charlie.public_key)
    w.say(f"  bob balance: {balance_of(store.utxo, bob_fresh.public_key)}")
    w.say(f"[9] Payment confirmed at depth {store.confirmations(payment.txid)}; Bob hands over the bike")
    return w
