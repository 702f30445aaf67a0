"""The Tracer Token as a state machine over a 10-minute interval clock."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator

from . import crypto
from .crypto import (
    RETENTION_DAYS,
    RETENTION_INTERVALS,
    ROLLING_PERIOD,
    RandomSource,
    SubnetworkSalt,
    TemporaryExposureKey,
)

if TYPE_CHECKING:
    from .authority import DiagnosisKeySet

SKEW_WINDOW = 1

SNAPSHOT_MAGIC = b"TTKS"
SNAPSHOT_VERSION = 1


class ClockError(ValueError):
    """The token clock was asked to move backwards."""


class RetentionError(ValueError):
    """A payload outside the 14-day retention window."""


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ObservedPayload:
    rpi_bytes: bytes
    aem_bytes: bytes
    heard_at: int
    rssi_hint: int | None = None


@dataclass(frozen=True, slots=True, order=True)
class ExposureEvent:
    interval: int
    disease_label: str


@dataclass
class MatchResult:
    events: list[ExposureEvent]
    status: str = "ok"

    def __iter__(self) -> Iterator[ExposureEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def __bool__(self) -> bool:
        return bool(self.events)


@dataclass
class TokenState:
    """One token. Mutating methods return ``self`` so transitions chain.

    ``tek_history`` holds the retained TEKs oldest first; the last entry is the
    current day's key.
    """

    salt: SubnetworkSalt
    tek_history: list[TemporaryExposureKey]
    created_at: int
    clock: int
    rng: RandomSource | None = field(default=None, repr=False, compare=False)
    exposure: str | None = None
    tx_power: int = 0
    # rpi bytes -> {heard interval: payload}
    _store: dict[bytes, dict[int, ObservedPayload]] = field(default_factory=dict, repr=False)

    @classmethod
    def create(cls, salt: SubnetworkSalt, now: int, rng: RandomSource | None = None) -> "TokenState":
        tek = crypto.generate_tek(rng, crypto.day_start(now))
        return cls(salt=salt, tek_history=[tek], created_at=now, clock=now, rng=rng)

    @property
    def current_tek(self) -> TemporaryExposureKey:
        return self.tek_history[-1]

    @property
    def exposure_flag(self) -> bool:
        return self.exposure is not None

    @property
    def payload_store(self) -> list[ObservedPayload]:
        return [p for by_interval in self._store.values() for p in by_interval.values()]

    def __len__(self) -> int:
        return sum(len(v) for v in self._store.values())

    def __contains__(self, payload: ObservedPayload) -> bool:
        return payload.heard_at in self._store.get(payload.rpi_bytes, {})

    def tick(self, now: int) -> "TokenState":
        if now < self.clock:
            raise ClockError(f"clock regression {self.clock} -> {now}")
        today = crypto.day_start(now)
        epoch = self.current_tek.epoch
        # at most 14 days are ever retained, so skip straight to the window start
        epoch = max(epoch, today - (RETENTION_DAYS - 1) * ROLLING_PERIOD - ROLLING_PERIOD)
        while epoch < today:
            epoch += ROLLING_PERIOD
            self.tek_history.append(crypto.generate_tek(self.rng, epoch))
        del self.tek_history[:-RETENTION_DAYS]
        self.clock = now
        self._prune()
        return self

    def _prune(self) -> None:
        horizon = self.clock - RETENTION_INTERVALS
        for rpi in list(self._store):
            by_interval = self._store[rpi]
            for heard in [h for h in by_interval if h < horizon]:
                del by_interval[heard]
            if not by_interval:
                del self._store[rpi]

    def advertise(self, now: int) -> tuple[bytes, bytes]:
        """Beacon payload (rpi, aem) for interval ``now`` under the current TEK."""
        tek = self.current_tek
        rpi = crypto.derive_rpi(crypto.derive_rpik(tek, self.salt), now)
        aem = crypto.encrypt_metadata(
            crypto.derive_aemk(tek, self.salt), rpi, crypto.metadata_bytes(self.tx_power)
        )
        return rpi.rpi, aem

    def observe(self, payload: ObservedPayload) -> "TokenState":
        age = self.clock - payload.heard_at
        if age > RETENTION_INTERVALS or age < 0:
            raise RetentionError(
                f"payload heard at {payload.heard_at} outside window ending {self.clock}"
            )
        self._store.setdefault(payload.rpi_bytes, {}).setdefault(payload.heard_at, payload)
        return self

    def match_diagnosis_keys(self, dk: "DiagnosisKeySet") -> MatchResult:
        if dk.salt.salt_bytes != self.salt.salt_bytes:
            return MatchResult([], status="wrong-subnetwork")
        horizon = self.clock - RETENTION_INTERVALS
        label = self.salt.label
        found: set[ExposureEvent] = set()
        for tek in dk.teks:
            for ident in crypto.rpi_sequence(tek, dk.salt):
                heard = self._store.get(ident.rpi)
                if not heard:
                    continue
                for delta in range(-SKEW_WINDOW, SKEW_WINDOW + 1):
                    at = ident.interval + delta
                    if at in heard and at >= horizon:
                        found.add(ExposureEvent(at, label))
        events = sorted(found)
        if events and self.exposure is None:
            self.exposure = label
        return MatchResult(events)

    def reinitialize(self, now: int | None = None) -> "TokenState":
        now = self.clock if now is None else now
        self._store.clear()
        self.tek_history = [crypto.generate_tek(self.rng, crypto.day_start(now))]
        self.exposure = None
        self.created_at = now
        self.clock = now
        return self

    # snapshot layout (big-endian):
    #   magic "TTKS" | version u8 | created_at u32 | clock u32 | tx_power i8
    #   | label len u8 + utf8 | salt len u8 + bytes | exposure len u8 + utf8 (0xFF = unset)
    #   | tek count u8 + (16 key + u32 epoch)* | payload count u32
    #   | per payload: 16 rpi + 4 aem + u32 heard + has_rssi u8 + i16 rssi
    def snapshot(self) -> bytes:
        label = self.salt.label.encode("utf-8")
        out = bytearray(SNAPSHOT_MAGIC)
        out += struct.pack(">BIIb", SNAPSHOT_VERSION, self.created_at, self.clock, self.tx_power)
        out += bytes([len(label)]) + label
        out += bytes([len(self.salt.salt_bytes)]) + self.salt.salt_bytes
        if self.exposure is None:
            out += b"\xff"
        else:
            exp = self.exposure.encode("utf-8")
            out += bytes([len(exp)]) + exp
        out += bytes([len(self.tek_history)])
        for tek in self.tek_history:
            out += tek.key + struct.pack(">I", tek.epoch)
        payloads = sorted(self.payload_store, key=lambda p: (p.heard_at, p.rpi_bytes))
        out += struct.pack(">I", len(payloads))
        for p in payloads:
            rssi = 0 if p.rssi_hint is None else p.rssi_hint
            out += p.rpi_bytes + p.aem_bytes + struct.pack(
                ">IBh", p.heard_at, p.rssi_hint is not None, rssi
            )
        return bytes(out)

    @classmethod
    def restore(cls, blob: bytes, rng: RandomSource | None = None) -> "TokenState":
        try:
            return cls._restore(memoryview(blob), rng)
        except (struct.error, IndexError, UnicodeDecodeError, ValueError) as exc:
            raise SnapshotError(f"corrupt token snapshot: {exc}") from exc

    @classmethod
    def _restore(cls, buf: memoryview, rng: RandomSource | None) -> "TokenState":
        if bytes(buf[:4]) != SNAPSHOT_MAGIC:
            raise SnapshotError("bad snapshot magic")
        version, created_at, clock, tx_power = struct.unpack_from(">BIIb", buf, 4)
        if version != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        pos = 4 + struct.calcsize(">BIIb")

        def take(n: int) -> bytes:
            nonlocal pos
            if pos + n > len(buf):
                raise SnapshotError("truncated snapshot")
            chunk = bytes(buf[pos:pos + n])
            pos += n
            return chunk

        label = take(take(1)[0]).decode("utf-8")
        salt = SubnetworkSalt(label, take(take(1)[0]))
        n = take(1)[0]
        exposure = None if n == 0xFF else take(n).decode("utf-8")
        teks = []
        for _ in range(take(1)[0]):
            key = take(16)
            teks.append(TemporaryExposureKey(key, struct.unpack(">I", take(4))[0]))
        state = cls(salt=salt, tek_history=teks, created_at=created_at, clock=clock,
                    rng=rng, exposure=exposure, tx_power=tx_power)
        for _ in range(struct.unpack(">I", take(4))[0]):
            rpi, aem = take(16), take(4)
            heard, has_rssi, rssi = struct.unpack(">IBh", take(7))
            state._store.setdefault(rpi, {})[heard] = ObservedPayload(
                rpi, aem, heard, rssi if has_rssi else None
            )
        if pos != len(buf):
            raise SnapshotError("trailing bytes in snapshot")
        return state
