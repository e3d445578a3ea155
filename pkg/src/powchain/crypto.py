"""Keys, signatures, ownership challenges and the project-wide digest.

Ed25519 is used for all signatures: 32-byte private keys, 32-byte public
keys, 64-byte deterministic signatures. Every digest is SHA-256.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

PublicKey = bytes
PrivateKey = bytes
Signature = bytes
Digest = bytes

KEY_SIZE = 32
SIGNATURE_SIZE = 64
DIGEST_SIZE = 32

_CHALLENGE_DOMAIN = b"powchain/ownership-challenge/v1:"


class InvalidKey(ValueError):
    """A key does not have the expected encoding."""


def digest(data: bytes) -> Digest:
    """Return the 32-byte SHA-256 digest of ``data``."""
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    public_key: PublicKey
    private_key: PrivateKey = field(repr=False)

    @property
    def public_hex(self) -> str:
        return self.public_key.hex()


def _load_private(private_key: bytes) -> Ed25519PrivateKey:
    if not isinstance(private_key, (bytes, bytearray)) or len(private_key) != KEY_SIZE:
        raise InvalidKey(f"private key must be {KEY_SIZE} bytes")
    return Ed25519PrivateKey.from_private_bytes(bytes(private_key))


def public_key_from_private(private_key: PrivateKey) -> PublicKey:
    return _load_private(private_key).public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """Create a key pair.

    With ``seed`` the private key is the digest of the seed, so the same seed
    always yields the same pair; without it the system CSPRNG is used.
    """
    private = digest(seed) if seed is not None else os.urandom(KEY_SIZE)
    return KeyPair(public_key=public_key_from_private(private), private_key=private)


def sign(private_key: PrivateKey, message: bytes) -> Signature:
    return _load_private(private_key).sign(message)


def verify(public_key: PublicKey, message: bytes, signature: Signature) -> bool:
    if len(public_key) != KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(bytes(signature), message)
    except (InvalidSignature, ValueError):
        return False
    return True


@dataclass(frozen=True)
class Challenge:
    nonce_bytes: bytes

    @classmethod
    def fresh(cls, size: int = 32) -> "Challenge":
        return cls(os.urandom(size))


@dataclass(frozen=True)
class ChallengeResponse:
    signature: Signature


def _challenge_message(challenge: Challenge) -> bytes:
    if not challenge.nonce_bytes:
        raise ValueError("challenge must be nonempty")
    # Domain separation keeps a challenge answer from doubling as a spend signature.
    return _CHALLENGE_DOMAIN + challenge.nonce_bytes


def prove_ownership(private_key: PrivateKey, challenge: Challenge) -> ChallengeResponse:
    """Answer a peer's challenge, proving control of ``private_key``."""
    return ChallengeResponse(sign(private_key, _challenge_message(challenge)))


def verify_ownership(public_key: PublicKey, challenge: Challenge, response: ChallengeResponse) -> bool:
    return verify(public_key, _challenge_message(challenge), response.signature)


def write_key_file(path: str | os.PathLike, keys: list[KeyPair], append: bool = True) -> None:
    """Store private keys as 64-hex lines in a file readable only by the owner."""
    mode = "a" if append else "w"
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | (os.O_APPEND if append else os.O_TRUNC), 0o600)
    with os.fdopen(fd, mode) as fh:
        for kp in keys:
            fh.write(kp.private_key.hex() + "\n")
    os.chmod(path, 0o600)


def read_key_file(path: str | os.PathLike) -> list[KeyPair]:
    keys = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if len(line) != 2 * KEY_SIZE:
                raise InvalidKey(f"{path}:{lineno}: expected 64 hex characters")
            private = bytes.fromhex(line)
            keys.append(KeyPair(public_key_from_private(private), private))
    return keys
