import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracer_token.authority import (
    DegenerateTokenError,
    DiagnosisKeySet,
    MalformedError,
    ProviderKeypair,
    Reject,
    build_diagnosis_key_set,
    fingerprint,
    sign,
    verify,
    verify_bytes,
)
from tracer_token.crypto import ROLLING_PERIOD, TemporaryExposureKey
from tracer_token.token import TokenState

DAY = ROLLING_PERIOD
START = 2000 * DAY
KP = ProviderKeypair.from_seed(b"clinic")
OTHER = ProviderKeypair.from_seed(b"rogue")


def token_aged(salt, days, seed=0):
    t = TokenState.create(salt, START, rng=random.Random(seed))
    return t.tick(START + days * DAY + 5)


@pytest.mark.parametrize("days, expected", [(0, 1), (3, 4), (13, 14), (30, 14)])
def test_build_counts(covid, days, expected):
    dk = build_diagnosis_key_set(token_aged(covid, days))
    assert len(dk.teks) == expected
    assert dk.teks[-1].epoch == START + days * DAY
    assert not dk.signed


def test_build_degenerate(covid):
    t = token_aged(covid, 0)
    t.tek_history.clear()
    with pytest.raises(DegenerateTokenError):
        build_diagnosis_key_set(t)


def test_sign_verify_accepts(flu):
    dk = sign(KP, build_diagnosis_key_set(token_aged(flu, 4)))
    verdict = verify([KP.public_key], dk)
    assert verdict and verdict.key == KP.public_key


def test_unknown_key(covid):
    dk = sign(OTHER, build_diagnosis_key_set(token_aged(covid, 2)))
    assert verify([KP.public_key], dk).reason is Reject.UNKNOWN_KEY
    assert verify([], dk).reason is Reject.UNKNOWN_KEY
    # off the wire the signer claim is gone, so it reads as a bad signature
    assert verify_bytes([KP.public_key], dk.encode()).reason is Reject.BAD_SIGNATURE


def test_unsigned_rejected(covid):
    dk = build_diagnosis_key_set(token_aged(covid, 2))
    assert verify([KP.public_key], dk).reason is Reject.BAD_SIGNATURE


def test_tampered_tek_rejected(covid):
    dk = sign(KP, build_diagnosis_key_set(token_aged(covid, 2)))
    first = dk.teks[0]
    swapped = TemporaryExposureKey(bytes(b ^ 1 for b in first.key), first.epoch)
    bad = replace(dk, teks=(swapped,) + dk.teks[1:])
    assert verify([KP.public_key], bad).reason is Reject.BAD_SIGNATURE


def test_every_bit_flip_rejected(flu):
    data = sign(KP, build_diagnosis_key_set(token_aged(flu, 2))).encode()
    reg = [KP.public_key]
    for i in range(len(data) * 8):
        mutated = bytearray(data)
        mutated[i // 8] ^= 1 << (i % 8)
        assert not verify_bytes(reg, bytes(mutated)), f"bit {i} accepted"


def test_truncation_rejected(covid):
    data = sign(KP, build_diagnosis_key_set(token_aged(covid, 1))).encode()
    for n in range(len(data)):
        assert verify_bytes([KP.public_key], data[:n]).reason is Reject.MALFORMED


def test_stale_window(covid):
    dk = build_diagnosis_key_set(token_aged(covid, 3))
    late = sign(KP, replace(dk, issued_at=dk.issued_at + 20 * DAY))
    assert verify([KP.public_key], late).reason is Reject.STALE_WINDOW
    early = sign(KP, replace(dk, issued_at=dk.teks[-1].epoch - 1))
    assert verify([KP.public_key], early).reason is Reject.STALE_WINDOW


def test_structural_malformed(covid):
    dk = build_diagnosis_key_set(token_aged(covid, 3))
    unordered = sign(KP, replace(dk, teks=tuple(reversed(dk.teks))))
    assert verify([KP.public_key], unordered).reason is Reject.MALFORMED
    empty = sign(KP, replace(dk, teks=()))
    assert verify([KP.public_key], empty).reason is Reject.MALFORMED


def test_encode_layout(flu):
    dk = sign(KP, build_diagnosis_key_set(token_aged(flu, 1)))
    data = dk.encode()
    n_salt = len(flu.salt_bytes)
    assert data[0] == 1 and data[1] == n_salt
    assert data[2:2 + n_salt] == flu.salt_bytes
    assert len(data) == 2 + n_salt + 5 + 20 * len(dk.teks) + 64
    assert data[-64:] == dk.signature


def test_decode_round_trip(flu):
    dk = sign(KP, build_diagnosis_key_set(token_aged(flu, 6)))
    back = DiagnosisKeySet.decode(dk.encode(), label=flu.label)
    assert back == dk and back.salt == flu
    assert back.encode() == dk.encode()


@pytest.mark.parametrize("blob", [b"", b"\x02\x00", b"\x01\x40" + bytes(80)])
def test_decode_malformed(blob):
    with pytest.raises(MalformedError):
        DiagnosisKeySet.decode(blob)


def test_decode_trailing_bytes(covid):
    data = sign(KP, build_diagnosis_key_set(token_aged(covid, 1))).encode()
    with pytest.raises(MalformedError):
        DiagnosisKeySet.decode(data + b"\x00")


def test_keypair_pem_round_trip():
    kp = ProviderKeypair.generate()
    back = ProviderKeypair.from_private_pem(kp.private_pem())
    assert back.public_key == kp.public_key
    assert fingerprint(kp.public_key) == kp.fingerprint and len(kp.fingerprint) == 16


def test_seeded_keypair_deterministic():
    assert ProviderKeypair.from_seed(b"x").public_key == ProviderKeypair.from_seed(b"x").public_key
    assert ProviderKeypair.from_seed(b"x").public_key != ProviderKeypair.from_seed(b"y").public_key


@settings(max_examples=40, deadline=None)
@given(days=st.integers(0, 40), seed=st.integers(0, 2**16))
def test_signed_sets_always_verify(days, seed):
    from tracer_token.crypto import SubnetworkSalt

    dk = sign(KP, build_diagnosis_key_set(token_aged(SubnetworkSalt.for_label("x"), days, seed)))
    assert verify([OTHER.public_key, KP.public_key], dk)
    assert verify_bytes([OTHER.public_key, KP.public_key], dk.encode())
