"""Healthcare-provider side: build, sign and verify Diagnosis Key sets.

Canonical encoding (big-endian)::

    version u8 | salt_len u8 | salt | issued_at u32 | count u8
    | count * (tek 16 | epoch u32) | signature 64

The signature is Ed25519 over every byte before the signature field.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .crypto import (
    MAX_SALT_LEN,
    RETENTION_DAYS,
    RETENTION_INTERVALS,
    ROLLING_PERIOD,
    SubnetworkSalt,
    TemporaryExposureKey,
)
from .token import TokenState

ENCODING_VERSION = 1
SIGNATURE_LEN = 64
PUBLIC_KEY_LEN = 32
UNSIGNED = bytes(SIGNATURE_LEN)


class Reject(str, Enum):
    BAD_SIGNATURE = "bad-signature"
    UNKNOWN_KEY = "unknown-key"
    STALE_WINDOW = "stale-window"
    MALFORMED = "malformed"


class MalformedError(ValueError):
    pass


class DegenerateTokenError(ValueError):
    """Token has no TEKs to report."""


def fingerprint(public_key: bytes) -> str:
    return hashlib.sha256(public_key).hexdigest()[:16]


@dataclass(frozen=True)
class ProviderKeypair:
    private_key: Ed25519PrivateKey = field(repr=False)

    @classmethod
    def generate(cls) -> "ProviderKeypair":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> "ProviderKeypair":
        """Deterministic keypair for simulations; never use a guessable seed in deployment."""
        return cls(Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest()))

    @property
    def public_key(self) -> bytes:
        return self.private_key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.public_key)

    def private_pem(self) -> bytes:
        return self.private_key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )

    @classmethod
    def from_private_pem(cls, pem: bytes) -> "ProviderKeypair":
        key = serialization.load_pem_private_key(pem, password=None)
        if not isinstance(key, Ed25519PrivateKey):
            raise ValueError("not an Ed25519 private key")
        return cls(key)


@dataclass(frozen=True)
class DiagnosisKeySet:
    teks: tuple[TemporaryExposureKey, ...]
    salt: SubnetworkSalt
    issued_at: int
    signature: bytes = UNSIGNED
    # claimed signer; informational only, not part of the encoding
    signer: bytes | None = field(default=None, compare=False)

    @property
    def signed(self) -> bool:
        return self.signature != UNSIGNED

    def signing_bytes(self) -> bytes:
        out = bytearray([ENCODING_VERSION, len(self.salt.salt_bytes)])
        out += self.salt.salt_bytes
        out += struct.pack(">IB", self.issued_at, len(self.teks))
        for tek in self.teks:
            out += tek.key + struct.pack(">I", tek.epoch)
        return bytes(out)

    def encode(self) -> bytes:
        return self.signing_bytes() + self.signature

    def digest(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()

    @classmethod
    def decode(cls, data: bytes, label: str | None = None) -> "DiagnosisKeySet":
        dk, end = cls.decode_prefix(data, 0, label)
        if end != len(data):
            raise MalformedError(f"{len(data) - end} trailing bytes")
        return dk

    @classmethod
    def decode_prefix(cls, data: bytes, pos: int = 0, label: str | None = None) -> tuple["DiagnosisKeySet", int]:
        """Decode one set starting at ``pos``; returns it and the offset just past it."""
        try:
            version, salt_len = data[pos], data[pos + 1]
        except IndexError:
            raise MalformedError("truncated header") from None
        if version != ENCODING_VERSION:
            raise MalformedError(f"unknown encoding version {version}")
        if salt_len > MAX_SALT_LEN:
            raise MalformedError(f"salt length {salt_len} exceeds {MAX_SALT_LEN}")
        pos += 2
        salt_bytes = bytes(data[pos:pos + salt_len])
        pos += salt_len
        if len(data) < pos + 5:
            raise MalformedError("truncated header")
        issued_at, count = struct.unpack_from(">IB", data, pos)
        pos += 5
        end = pos + count * 20 + SIGNATURE_LEN
        if len(data) < end:
            raise MalformedError("truncated body")
        teks = []
        for _ in range(count):
            key = bytes(data[pos:pos + 16])
            (epoch,) = struct.unpack_from(">I", data, pos + 16)
            pos += 20
            if epoch % ROLLING_PERIOD:
                raise MalformedError(f"TEK epoch {epoch} not day-aligned")
            teks.append(TemporaryExposureKey(key, epoch))
        signature = bytes(data[pos:pos + SIGNATURE_LEN])
        salt = SubnetworkSalt(label if label is not None else salt_bytes.hex(), salt_bytes)
        return cls(tuple(teks), salt, issued_at, signature), end


def build_diagnosis_key_set(token: TokenState, now: int | None = None) -> DiagnosisKeySet:
    """Unsigned set of the token's retained TEKs (at most 14, current day included)."""
    if not token.tek_history:
        raise DegenerateTokenError("token holds no TEKs")
    now = token.clock if now is None else now
    return DiagnosisKeySet(tuple(token.tek_history[-RETENTION_DAYS:]), token.salt, now)


def sign(keypair: ProviderKeypair, dk: DiagnosisKeySet) -> DiagnosisKeySet:
    sig = keypair.private_key.sign(dk.signing_bytes())
    return replace(dk, signature=sig, signer=keypair.public_key)


def structural_problem(dk: DiagnosisKeySet) -> Reject | None:
    n = len(dk.teks)
    if not 1 <= n <= RETENTION_DAYS or len(dk.signature) != SIGNATURE_LEN:
        return Reject.MALFORMED
    epochs = [t.epoch for t in dk.teks]
    if any(b <= a for a, b in zip(epochs, epochs[1:])):
        return Reject.MALFORMED
    if epochs[0] < dk.issued_at - RETENTION_INTERVALS or epochs[-1] > dk.issued_at:
        return Reject.STALE_WINDOW
    return None


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: Reject | None = None
    key: bytes | None = None

    def __bool__(self) -> bool:
        return self.accepted


def _verifies(public_key: bytes, dk: DiagnosisKeySet) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(dk.signature, dk.signing_bytes())
    except (InvalidSignature, ValueError):
        return False
    return True


def verify(registry: Iterable[bytes], dk: DiagnosisKeySet) -> Verdict:
    """Accept iff structure is sound and some registered key verifies the signature.

    When the set carries a claimed signer, an unregistered signer is reported as
    ``unknown-key``; without one (sets decoded off the wire) every failure is
    ``bad-signature``.
    """
    problem = structural_problem(dk)
    if problem is not None:
        return Verdict(False, problem)
    keys = list(registry)
    if dk.signer is not None:
        if dk.signer not in keys:
            return Verdict(False, Reject.UNKNOWN_KEY)
        keys = [dk.signer]
    elif not keys:
        return Verdict(False, Reject.UNKNOWN_KEY)
    for key in keys:
        if _verifies(key, dk):
            return Verdict(True, key=key)
    return Verdict(False, Reject.BAD_SIGNATURE)


def verify_bytes(registry: Iterable[bytes], data: bytes) -> Verdict:
    try:
        dk = DiagnosisKeySet.decode(data)
    except (MalformedError, ValueError):
        return Verdict(False, Reject.MALFORMED)
    return verify(registry, dk)
