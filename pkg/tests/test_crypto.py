import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracer_token import crypto, reference
from tracer_token.crypto import (
    AlignmentError,
    SubnetworkSalt,
    TemporaryExposureKey,
    derive_aemk,
    derive_rpi,
    derive_rpik,
    interval_number,
    rpi_sequence,
)

ZERO_TEK = TemporaryExposureKey(bytes(16), 0)

# frozen from tracer_token.reference (and cross-checked against stdlib hmac)
ZERO_RPIK = "57e4c5f2ceeb86a849542209e846a4d9"
ZERO_AEMK = "e8ccd234e1115b41c823f73e42f30375"
FIXED_RPIK = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
FIXED_RPI_2650847 = "cce48598230f03996926407a0bc58a62"
FIXED_AEMK = bytes.fromhex("f0e1d2c3b4a5968778695a4b3c2d1e0f")
FIXED_AEM = "7ce57203"
# first 16 bytes of random.Random(1234).randbytes, recorded once
SEEDED_TEK = "b97f69f75edf35c71fdad37066eae91d"

teks = st.builds(
    TemporaryExposureKey,
    st.binary(min_size=16, max_size=16),
    st.integers(0, 2 ** 32 // 144 - 1).map(lambda d: d * 144),
)
salts = st.builds(SubnetworkSalt, st.just("x"), st.binary(max_size=32))


@pytest.mark.parametrize("seconds, expected", [(0, 0), (600, 1), (599, 0), (1234567890, 2057613)])
def test_interval_number(seconds, expected):
    assert interval_number(seconds) == expected


@given(st.integers(0, 2 ** 40).map(lambda t: t * 600))
def test_interval_number_advances_one_per_period(t):
    assert interval_number(t + 600) == interval_number(t) + 1


@given(st.integers(0, 2 ** 63), st.integers(0, 2 ** 20))
def test_interval_number_monotone(t, dt):
    assert interval_number(t + dt) >= interval_number(t)


def test_generate_tek_seeded_is_stream_prefix(rng):
    assert crypto.generate_tek(rng, 0).key.hex() == SEEDED_TEK


def test_generate_tek_seeded_golden_epoch_144():
    tek = crypto.generate_tek(random.Random(1234), 144)
    assert (tek.key.hex(), tek.epoch) == (SEEDED_TEK, 144)


def test_generate_tek_fresh_keys_differ():
    assert crypto.generate_tek(None, 144).key != crypto.generate_tek(None, 144).key


@pytest.mark.parametrize("epoch", [1, 143, 145, 288 + 7])
def test_generate_tek_rejects_misaligned_epoch(epoch):
    with pytest.raises(AlignmentError):
        crypto.generate_tek(random.Random(0), epoch)


def test_zero_tek_vectors():
    assert derive_rpik(ZERO_TEK, SubnetworkSalt("x", b"")).hex() == ZERO_RPIK
    assert derive_aemk(ZERO_TEK, SubnetworkSalt("x", b"")).hex() == ZERO_AEMK


def test_empty_salt_equals_absent_salt(covid):
    assert derive_rpik(ZERO_TEK, covid) == derive_rpik(ZERO_TEK) == derive_rpik(ZERO_TEK, None)
    assert derive_aemk(ZERO_TEK, covid) == derive_aemk(ZERO_TEK)


def test_distinct_salts_give_distinct_keys(covid, flu):
    assert derive_rpik(ZERO_TEK, covid) != derive_rpik(ZERO_TEK, flu)
    assert derive_rpik(ZERO_TEK, flu).hex() == reference.rpik(bytes(16), flu.salt_bytes).hex()


def test_aemk_differs_from_rpik_over_random_inputs():
    rng = random.Random(7)
    for _ in range(100):
        tek = TemporaryExposureKey(rng.randbytes(16), 144 * rng.randrange(10 ** 5))
        salt = SubnetworkSalt("s", rng.randbytes(rng.randrange(33)))
        assert derive_aemk(tek, salt) != derive_rpik(tek, salt)


@settings(max_examples=50)
@given(teks, salts, st.integers(0, 2 ** 32 - 1))
def test_derivations_match_reference(tek, salt, interval):
    rpik = derive_rpik(tek, salt)
    assert rpik == reference.rpik(tek.key, salt.salt_bytes)
    assert derive_aemk(tek, salt) == reference.aemk(tek.key, salt.salt_bytes)
    assert derive_rpi(rpik, interval).rpi == reference.rpi(rpik, interval)
    assert derive_rpik(tek, salt) == rpik


def test_rpi_fixed_vector():
    ident = derive_rpi(FIXED_RPIK, 2650847)
    assert ident.rpi.hex() == FIXED_RPI_2650847
    assert ident.interval == 2650847
    assert derive_rpi(FIXED_RPIK, 2650847) == ident


def test_padded_block_layout():
    block = crypto.padded_block(0x01020304)
    assert block == b"EN-RPI" + bytes(6) + bytes([4, 3, 2, 1])


def test_distinct_intervals_distinct_rpis():
    assert derive_rpi(FIXED_RPIK, 10).rpi != derive_rpi(FIXED_RPIK, 11).rpi


@settings(max_examples=20)
@given(teks, salts)
def test_rpi_sequence_is_pointwise_derivation(tek, salt):
    seq = rpi_sequence(tek, salt)
    assert len(seq) == 144
    rpik = derive_rpik(tek, salt)
    assert seq == [derive_rpi(rpik, tek.epoch + k) for k in range(144)]
    assert len({r.rpi for r in seq}) == 144


def test_metadata_fixed_vector():
    ident = derive_rpi(FIXED_RPIK, 2650847)
    ct = crypto.encrypt_metadata(FIXED_AEMK, ident, bytes([0x40, 0, 0, 0]))
    assert ct.hex() == FIXED_AEM
    assert crypto.decrypt_metadata(FIXED_AEMK, ident, ct) == bytes([0x40, 0, 0, 0])


@given(st.binary(min_size=16, max_size=16), st.binary(min_size=16, max_size=16), st.binary(min_size=4, max_size=4))
def test_metadata_round_trip(aemk, rpi, meta):
    assert crypto.decrypt_metadata(aemk, rpi, crypto.encrypt_metadata(aemk, rpi, meta)) == meta


def test_metadata_depends_on_key():
    rng = random.Random(9)
    for _ in range(100):
        rpi, meta = rng.randbytes(16), rng.randbytes(4)
        k1, k2 = rng.randbytes(16), rng.randbytes(16)
        assert crypto.encrypt_metadata(k1, rpi, meta) != crypto.encrypt_metadata(k2, rpi, meta)


def test_metadata_layout():
    assert crypto.metadata_bytes(-12) == bytes([0x40, 0xF4, 0, 0])
    assert crypto.parse_metadata(crypto.metadata_bytes(-12)) == (0x40, -12)


def test_metadata_length_checked():
    with pytest.raises(ValueError):
        crypto.encrypt_metadata(FIXED_AEMK, bytes(16), b"abc")


def test_codomain_disjoint_small(covid, flu):
    rng = random.Random(5)
    a, b = set(), set()
    for _ in range(50):
        tek = TemporaryExposureKey(rng.randbytes(16), 144)
        a |= {r.rpi for r in rpi_sequence(tek, covid)}
        b |= {r.rpi for r in rpi_sequence(tek, flu)}
    assert len(a) == len(b) == 50 * 144
    assert not a & b


def test_salt_registry_defaults():
    assert SubnetworkSalt.for_label("COVID-19").salt_bytes == b""
    assert SubnetworkSalt.for_label("influenza") != SubnetworkSalt.for_label("tuberculosis")
    with pytest.raises(ValueError):
        SubnetworkSalt("x", bytes(33))


def test_tek_validates_length():
    with pytest.raises(ValueError):
        TemporaryExposureKey(bytes(15), 0)
