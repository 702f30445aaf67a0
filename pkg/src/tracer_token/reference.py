"""Slow, dependency-free reimplementation of the key schedule.

Shares no code with :mod:`tracer_token.crypto`: AES-128 is written out from
FIPS-197, HMAC from RFC 2104 over ``hashlib.sha256``, HKDF from RFC 5869.
Used as the independent oracle in tests and the acceptance run.
"""

import hashlib


def _xtime(a):
    a <<= 1
    if a & 0x100:
        a ^= 0x11B
    return a


def _gmul(a, b):
    r = 0
    while b:
        if b & 1:
            r ^= a
        a = _xtime(a)
        b >>= 1
    return r


def _build_sbox():
    inv = [0] * 256
    for a in range(1, 256):
        for b in range(1, 256):
            if _gmul(a, b) == 1:
                inv[a] = b
                break
    sbox = []
    for a in range(256):
        x = inv[a]
        s = x
        for shift in range(1, 5):
            s ^= ((x << shift) | (x >> (8 - shift))) & 0xFF
        sbox.append(s ^ 0x63)
    return sbox


SBOX = _build_sbox()
RCON = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36]


def _expand_key(key):
    words = [list(key[i:i + 4]) for i in range(0, 16, 4)]
    for i in range(4, 44):
        t = list(words[i - 1])
        if i % 4 == 0:
            t = t[1:] + t[:1]
            t = [SBOX[b] for b in t]
            t[0] ^= RCON[i // 4 - 1]
        words.append([words[i - 4][j] ^ t[j] for j in range(4)])
    return [sum(words[r * 4:r * 4 + 4], []) for r in range(11)]


def aes128_encrypt_block(key, block):
    if len(key) != 16 or len(block) != 16:
        raise ValueError("AES-128 needs a 16-byte key and block")
    rounds = _expand_key(key)
    s = [b ^ k for b, k in zip(block, rounds[0])]
    for rnd in range(1, 11):
        s = [SBOX[b] for b in s]
        # state is column-major: byte (row r, col c) at index 4c + r
        s = [s[4 * ((c + r) % 4) + r] for c in range(4) for r in range(4)]
        if rnd != 10:
            mixed = []
            for c in range(4):
                a = s[4 * c:4 * c + 4]
                mixed += [
                    _gmul(a[0], 2) ^ _gmul(a[1], 3) ^ a[2] ^ a[3],
                    a[0] ^ _gmul(a[1], 2) ^ _gmul(a[2], 3) ^ a[3],
                    a[0] ^ a[1] ^ _gmul(a[2], 2) ^ _gmul(a[3], 3),
                    _gmul(a[0], 3) ^ a[1] ^ a[2] ^ _gmul(a[3], 2),
                ]
            s = mixed
        s = [b ^ k for b, k in zip(s, rounds[rnd])]
    return bytes(s)


def aes128_ctr(key, counter_block, data):
    counter = int.from_bytes(counter_block, "big")
    out = bytearray()
    for off in range(0, len(data), 16):
        stream = aes128_encrypt_block(key, counter.to_bytes(16, "big"))
        chunk = data[off:off + 16]
        out += bytes(x ^ y for x, y in zip(chunk, stream))
        counter = (counter + 1) % (1 << 128)
    return bytes(out)


def hmac_sha256(key, msg):
    block = 64
    if len(key) > block:
        key = hashlib.sha256(key).digest()
    key = key.ljust(block, b"\x00")
    inner = hashlib.sha256(bytes(k ^ 0x36 for k in key) + msg).digest()
    return hashlib.sha256(bytes(k ^ 0x5C for k in key) + inner).digest()


def hkdf_sha256(ikm, salt, info, length):
    if not salt:
        salt = b"\x00" * 32
    prk = hmac_sha256(salt, ikm)
    okm, t, i = b"", b"", 1
    while len(okm) < length:
        t = hmac_sha256(prk, t + info + bytes([i]))
        okm += t
        i += 1
    return okm[:length]


def rpik(tek_key, salt_bytes=b""):
    return hkdf_sha256(tek_key, salt_bytes, "EN-RPIK".encode("utf-8"), 16)


def aemk(tek_key, salt_bytes=b""):
    return hkdf_sha256(tek_key, salt_bytes, "EN-AEMK".encode("utf-8"), 16)


def rpi(rpik_bytes, interval):
    data = bytearray(16)
    data[0:6] = "EN-RPI".encode("utf-8")
    for k in range(4):
        data[12 + k] = (interval >> (8 * k)) & 0xFF
    return aes128_encrypt_block(rpik_bytes, bytes(data))


def aem(aemk_bytes, rpi_bytes, metadata):
    return aes128_ctr(aemk_bytes, rpi_bytes, metadata)
