"""Proof-of-work ledger with longest-chain consensus, a seeded network
simulator, and a double-spend attack lab."""

__version__ = "0.1.0"

#: Name of the single hash function used for every digest in the system.
HASH_ALGORITHM = "sha256"
