"""Exposure-notification key schedule with per-disease salting.

TEK -> RPIK/AEMK (HKDF-SHA256, salt = subnetwork salt) -> RPI (AES-128 over a
padded interval block) and AEM (AES-128-CTR with the RPI as counter block).
An empty salt reproduces the unsalted derivation byte for byte.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass
from typing import Protocol

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

INTERVAL_SECONDS = 600
ROLLING_PERIOD = 144
RETENTION_DAYS = 14
RETENTION_INTERVALS = RETENTION_DAYS * ROLLING_PERIOD

TEK_LEN = 16
RPI_LEN = 16
AEM_LEN = 4
MAX_SALT_LEN = 32

RPIK_INFO = b"EN-RPIK"
AEMK_INFO = b"EN-AEMK"
RPI_TAG = b"EN-RPI"

METADATA_VERSION = 0x40

BASELINE_LABEL = "COVID-19"


class AlignmentError(ValueError):
    """A TEK epoch that is not on a day boundary."""


class RandomSource(Protocol):
    def randbytes(self, n: int) -> bytes: ...


def interval_number(unix_seconds: int) -> int:
    return unix_seconds // INTERVAL_SECONDS


def day_start(interval: int) -> int:
    """First interval of the day containing ``interval``."""
    return interval - interval % ROLLING_PERIOD


@dataclass(frozen=True, slots=True)
class TemporaryExposureKey:
    key: bytes
    epoch: int

    def __post_init__(self):
        if len(self.key) != TEK_LEN:
            raise ValueError(f"TEK must be {TEK_LEN} bytes, got {len(self.key)}")
        if self.epoch % ROLLING_PERIOD:
            raise AlignmentError(f"TEK epoch {self.epoch} is not a multiple of {ROLLING_PERIOD}")


@dataclass(frozen=True, slots=True)
class SubnetworkSalt:
    label: str
    salt_bytes: bytes = b""

    def __post_init__(self):
        if len(self.salt_bytes) > MAX_SALT_LEN:
            raise ValueError(f"salt longer than {MAX_SALT_LEN} bytes")

    @classmethod
    def for_label(cls, label: str) -> "SubnetworkSalt":
        """Default registry entry: baseline network unsalted, others hashed from the label."""
        if label == BASELINE_LABEL:
            return cls(label, b"")
        return cls(label, hashlib.sha256(label.encode("utf-8")).digest()[:16])


BASELINE = SubnetworkSalt(BASELINE_LABEL, b"")


@dataclass(frozen=True, slots=True)
class RollingProximityIdentifier:
    rpi: bytes
    interval: int


def generate_tek(rng: RandomSource | None, day_epoch: int) -> TemporaryExposureKey:
    """Fresh TEK for the day starting at ``day_epoch``.

    ``rng=None`` uses the OS CSPRNG; tests pass a seeded ``random.Random``.
    """
    if day_epoch % ROLLING_PERIOD:
        raise AlignmentError(f"day epoch {day_epoch} is not a multiple of {ROLLING_PERIOD}")
    if rng is None:
        rng = random.SystemRandom()
    return TemporaryExposureKey(rng.randbytes(TEK_LEN), day_epoch)


def _hkdf(tek: TemporaryExposureKey, salt: SubnetworkSalt | None, info: bytes) -> bytes:
    salt_bytes = salt.salt_bytes if salt is not None else None
    return HKDF(
        algorithm=hashes.SHA256(),
        length=16,
        salt=salt_bytes or None,
        info=info,
    ).derive(tek.key)


def derive_rpik(tek: TemporaryExposureKey, salt: SubnetworkSalt | None = None) -> bytes:
    return _hkdf(tek, salt, RPIK_INFO)


def derive_aemk(tek: TemporaryExposureKey, salt: SubnetworkSalt | None = None) -> bytes:
    return _hkdf(tek, salt, AEMK_INFO)


def padded_block(interval: int) -> bytes:
    return RPI_TAG + bytes(6) + struct.pack("<I", interval & 0xFFFFFFFF)


def derive_rpi(rpik: bytes, interval: int) -> RollingProximityIdentifier:
    enc = Cipher(algorithms.AES(rpik), modes.ECB()).encryptor()
    return RollingProximityIdentifier(enc.update(padded_block(interval)), interval)


def rpi_sequence(tek: TemporaryExposureKey, salt: SubnetworkSalt | None = None) -> list[RollingProximityIdentifier]:
    """All 144 identifiers of the TEK's day, in interval order."""
    rpik = derive_rpik(tek, salt)
    intervals = range(tek.epoch, tek.epoch + ROLLING_PERIOD)
    # ECB over the concatenated blocks == one AES call per block
    blob = Cipher(algorithms.AES(rpik), modes.ECB()).encryptor().update(
        b"".join(padded_block(i) for i in intervals)
    )
    return [
        RollingProximityIdentifier(blob[k * RPI_LEN:(k + 1) * RPI_LEN], i)
        for k, i in enumerate(intervals)
    ]


def _ctr(aemk: bytes, rpi: RollingProximityIdentifier | bytes, data: bytes) -> bytes:
    nonce = rpi.rpi if isinstance(rpi, RollingProximityIdentifier) else rpi
    return Cipher(algorithms.AES(aemk), modes.CTR(nonce)).encryptor().update(data)


def encrypt_metadata(aemk: bytes, rpi: RollingProximityIdentifier | bytes, metadata: bytes) -> bytes:
    if len(metadata) != AEM_LEN:
        raise ValueError(f"metadata must be {AEM_LEN} bytes")
    return _ctr(aemk, rpi, metadata)


def decrypt_metadata(aemk: bytes, rpi: RollingProximityIdentifier | bytes, ciphertext: bytes) -> bytes:
    if len(ciphertext) != AEM_LEN:
        raise ValueError(f"ciphertext must be {AEM_LEN} bytes")
    return _ctr(aemk, rpi, ciphertext)


def metadata_bytes(tx_power: int = 0, version: int = METADATA_VERSION) -> bytes:
    """Plaintext layout: version, signed transmit power (dBm), two reserved zeros."""
    return struct.pack("<Bbxx", version, tx_power)


def parse_metadata(plaintext: bytes) -> tuple[int, int]:
    version, tx_power = struct.unpack("<Bbxx", plaintext)
    return version, tx_power
