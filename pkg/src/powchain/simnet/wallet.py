"""Per-node key set and payment construction."""
from __future__ import annotations

from .. import crypto
from ..crypto import KeyPair, PublicKey
from ..ledger.model import OutPoint, Transaction, TxInput, TxOutput
from ..miner import Mempool


class InsufficientFunds(Exception):
    pass


class Wallet:
    """Deterministic key chain: key ``k`` of node ``n`` derives from (seed, n, k)."""

    def __init__(self, seed: int, node: int):
        self.seed = seed
        self.node = node
        self.keys: dict[PublicKey, bytes] = {}
        self._counter = 0

    def fresh(self) -> KeyPair:
        kp = crypto.generate_keypair(f"wallet:{self.seed}:{self.node}:{self._counter}".encode())
        self._counter += 1
        self.add(kp)
        return kp

    def add(self, kp: KeyPair) -> None:
        self.keys[kp.public_key] = kp.private_key

    def owns(self, key: PublicKey) -> bool:
        return key in self.keys

    def spendable(self, utxo, mempool: Mempool) -> list[tuple[OutPoint, TxOutput]]:
        """Confirmed and pending outputs we own that no pending tx consumes."""
        coins = [(op, out) for op, out in utxo if out.recipient in self.keys]
        for txid, entry in mempool.entries.items():
            for i, out in enumerate(entry.tx.outputs):
                if out.recipient in self.keys:
                    coins.append((OutPoint(txid, i), out))
        coins = [c for c in coins if c[0] not in mempool.spends]
        coins.sort(key=lambda c: (c[0].txid, c[0].index))
        return coins

    def balance(self, utxo) -> int:
        return sum(out.amount for _, out in utxo if out.recipient in self.keys)

    def build_payment(self, utxo, mempool: Mempool, recipient: PublicKey, amount: int,
                      fee: int) -> Transaction:
        """Spend the first coins (outpoint order) covering amount + fee; change
        goes to a fresh key of ours."""
        inputs, total = self.select(utxo, mempool, amount + fee)
        outputs = [TxOutput(amount, recipient)]
        if total > amount + fee:
            outputs.append(TxOutput(total - amount - fee, self.fresh().public_key))
        return self.sign(Transaction(tuple(inputs), tuple(outputs)))

    def select(self, utxo, mempool: Mempool, target: int) -> tuple[list[TxInput], int]:
        inputs, total = [], 0
        for op, out in self.spendable(utxo, mempool):
            if total >= target:
                break
            inputs.append(TxInput(op.txid, op.index, out.recipient))
            total += out.amount
        if total < target:
            raise InsufficientFunds(f"need {target}, have {total}")
        return inputs, total

    def sign(self, tx: Transaction) -> Transaction:
        return tx.signed(self.keys)
