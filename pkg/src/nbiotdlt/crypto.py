"""Signing, verification and hashing.

ECDSA over secp256k1 with SHA-256 and RFC 6979 deterministic nonces
(libsecp256k1 through ``coincurve``). DER signatures are 70 to 72 bytes
long, so they are zero-padded to a fixed 72-byte wire form; verification
rejects any non-zero padding so every byte of the wire form is significant.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import coincurve

SIGNATURE_LEN = 72
DIGEST_LEN = 32
HASH_NAME = "sha256"
SCHEME = "ecdsa_like"
CURVE = "secp256k1"

_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
_PUBLIC_LEN = 65


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    secret: bytes
    public: bytes
    scheme: str = SCHEME

    @classmethod
    def from_seed(cls, seed: bytes | str) -> KeyPair:
        if isinstance(seed, str):
            seed = seed.encode()
        scalar = int.from_bytes(digest(b"keygen:" + seed), "big") % (_ORDER - 1) + 1
        secret = scalar.to_bytes(32, "big")
        return cls(secret, public_from_secret(secret))


def public_from_secret(secret: bytes) -> bytes:
    """Uncompressed SEC 1 point, 65 bytes."""
    return _private_key(secret).public_key.format(compressed=False)


@lru_cache(maxsize=256)
def _private_key(secret: bytes) -> coincurve.PrivateKey:
    return coincurve.PrivateKey(secret)


@lru_cache(maxsize=256)
def _public_key(public: bytes) -> coincurve.PublicKey | None:
    # Only the plain uncompressed form; libsecp256k1 would also take the
    # "hybrid" 0x06/0x07 prefixes, which makes a one-byte change of the
    # prefix verify against the same point.
    if len(public) != _PUBLIC_LEN or public[0] != 0x04:
        return None
    try:
        return coincurve.PublicKey(public)
    except ValueError:
        return None


def sign(secret: bytes, message: bytes) -> bytes:
    der = _private_key(secret).sign(message)
    if len(der) > SIGNATURE_LEN:  # pragma: no cover - impossible for a 256-bit curve
        raise ValueError("DER signature longer than wire size")
    return der + bytes(SIGNATURE_LEN - len(der))


def _der_length(sig: bytes) -> int | None:
    # SEQUENCE tag + short-form length; 256-bit signatures never need long form.
    if len(sig) < 2 or sig[0] != 0x30 or sig[1] & 0x80:
        return None
    return sig[1] + 2


@lru_cache(maxsize=65536)
def verify(public: bytes, message: bytes, sig: bytes) -> bool:
    if len(sig) != SIGNATURE_LEN:
        return False
    n = _der_length(sig)
    if n is None or n > SIGNATURE_LEN or any(sig[n:]):
        return False
    key = _public_key(public)
    if key is None:
        return False
    try:
        return bool(key.verify(sig[:n], message))
    except ValueError:
        return False
