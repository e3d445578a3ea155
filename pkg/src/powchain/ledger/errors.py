"""Rejection taxonomy for transactions, blocks and chain operations."""
from __future__ import annotations


class ValidationError(Exception):
    """Base class for every consensus-rule violation."""

    rule = "invalid"

    def __init__(self, message: str = "", *, tx_index: int | None = None):
        super().__init__(message or self.rule)
        self.tx_index = tx_index

    def __str__(self) -> str:
        base = super().__str__()
        if self.tx_index is not None:
            return f"{self.rule} (tx {self.tx_index}): {base}"
        return f"{self.rule}: {base}"


class TransactionError(ValidationError):
    rule = "InvalidTransaction"


class MalformedTransaction(TransactionError):
    rule = "MalformedTransaction"


class UnknownOutpoint(TransactionError):
    rule = "UnknownOutpoint"


class AlreadySpent(TransactionError):
    rule = "AlreadySpent"


class DuplicateInput(AlreadySpent):
    rule = "DuplicateInput"


class BadSignature(TransactionError):
    rule = "BadSignature"


class WrongOwner(TransactionError):
    rule = "WrongOwner"


class ValueOverflow(TransactionError):
    rule = "ValueOverflow"


class NegativeFee(TransactionError):
    rule = "NegativeFee"


class BlockError(ValidationError):
    rule = "InvalidBlock"


class BadProofOfWork(BlockError):
    rule = "BadProofOfWork"


class BadCommitment(BlockError):
    rule = "BadCommitment"


class BadCoinbase(BlockError):
    rule = "BadCoinbase"


class BadHeight(BlockError):
    rule = "BadHeight"


class BadGenesis(BlockError):
    rule = "BadGenesis"


class UnknownParent(BlockError):
    """Raised after an orphan block has been buffered awaiting its parent."""

    rule = "UnknownParent"
