"""Transaction and block model, validation, UTXO tracking and fork choice."""
from .chain import (
    ChainSnapshot,
    ChainStore,
    ChainVerificationError,
    TipUpdate,
    apply_block,
    audit,
    confirmations,
    replay_chain,
)
from .errors import *  # noqa: F401,F403
from .model import (
    GENESIS,
    GENESIS_AMOUNT,
    GENESIS_KEY,
    Block,
    BlockHeader,
    OutPoint,
    Transaction,
    TxInput,
    TxOutput,
    coinbase,
    leading_zero_bits,
    make_block,
    meets_difficulty,
    signing_payload,
    tx_commitment,
)
from .utxo import UtxoSet, UtxoView, balance_of
from .validation import DEFAULT_BLOCK_REWARD, check_proof_of_work, validate_block, validate_transaction
