import hashlib
import hmac
import random

import pytest
from hypothesis import given, strategies as st

from boprf.algebra import FIELD, FieldError, PrimeField
from boprf.crypto import (
    EnvelopeAuthError,
    EnvelopeFormatError,
    PrfKey,
    PrpKey,
    envelope_open,
    envelope_seal,
    f2_eval,
    hash_bytes,
    hash_to_vector,
    prf_eval,
    reconstruct,
    share,
)


def test_prp_roundtrip(rng):
    key = PrpKey.random(9, rng)
    for _ in range(50):
        v = FIELD.random_vector(9, rng)
        assert key.invert(key.apply(v)) == v
        assert key.apply(key.invert(v)) == v


def test_prp_is_affine_componentwise():
    f = PrimeField(251)
    key = PrpKey((2, 3), (5, 7), f)
    assert key.apply((10, 20)) == ((2 * 10 + 5) % 251, (3 * 20 + 7) % 251)


def test_identity_prp():
    key = PrpKey.identity(4)
    v = (1, 2, 3, 4)
    assert key.apply(v) == v == key.invert(v)


def test_prp_rejects_zero_multiplier():
    with pytest.raises(FieldError):
        PrpKey((1, 0), (0, 0))
    with pytest.raises(FieldError):
        PrpKey((1,), (0, 0))


def test_prp_fingerprint_distinguishes_keys(rng):
    a, b = PrpKey.random(3, rng), PrpKey.random(3, rng)
    assert a.fingerprint() != b.fingerprint()
    assert a.fingerprint() == PrpKey(a.a, a.b).fingerprint()


def test_hash_domain_separation():
    assert hash_bytes(b"a", [b"x"]) != hash_bytes(b"b", [b"x"])
    assert hash_bytes(b"a", [b"xy", b""]) != hash_bytes(b"a", [b"x", b"y"])
    assert len(hash_bytes(b"a", [b"x"], 48)) == 48


def test_hash_to_vector_range_and_determinism():
    v = hash_to_vector(b"t", [b"w"], 40)
    assert len(v) == 40 and all(0 <= c < FIELD.p for c in v)
    assert v == hash_to_vector(b"t", [b"w"], 40)
    assert v != hash_to_vector(b"t", [b"w2"], 40)
    assert hash_to_vector(b"t", [b"w"], 41)[:40] != v


def test_hash_to_vector_small_field_uniformity():
    f = PrimeField(251)
    counts = [0] * 251
    n = 0
    for i in range(200):
        for c in hash_to_vector(b"u", [str(i).encode()], 50, f):
            counts[c] += 1
            n += 1
    exp = n / 251
    chi2 = sum((c - exp) ** 2 / exp for c in counts)
    # 250 degrees of freedom: mean 250, sd about 22.4
    assert chi2 < 250 + 5 * 22.4


def test_prf_keyed_and_deterministic(rng):
    k1, k2 = PrfKey.random(rng), PrfKey.random(rng)
    v = FIELD.random_vector(5, rng)
    assert prf_eval(k1, v) == prf_eval(k1, v)
    assert prf_eval(k1, v) != prf_eval(k2, v)
    assert prf_eval(k1, v) != prf_eval(k1, FIELD.vadd(v, (1, 0, 0, 0, 0)))
    with pytest.raises(ValueError):
        PrfKey(b"short")


def test_f2_is_truncated_hmac_sha256():
    key, data = b"k" * 16, b"payload"
    assert f2_eval(key, data) == hmac.new(key, data, hashlib.sha256).digest()[:16]


@given(st.integers(0, FIELD.p - 1), st.integers(1, 12), st.integers(0, 2**32))
def test_share_reconstruct(secret, n, seed):
    shares = share(secret, n, random.Random(seed))
    assert len(shares) == n
    assert reconstruct(shares) == secret


def test_share_rejects_empty():
    with pytest.raises(ValueError):
        share(1, 0, random.Random(0))
    with pytest.raises(ValueError):
        reconstruct(())


def test_envelope_roundtrip_and_auth(rng):
    key = rng.randbytes(16)
    ct = envelope_seal(key, b"secret material", nonce=rng.randbytes(12))
    assert envelope_open(key, ct) == b"secret material"
    with pytest.raises(EnvelopeAuthError):
        envelope_open(rng.randbytes(16), ct)
    flipped = bytearray(ct)
    flipped[-1] ^= 1
    with pytest.raises(EnvelopeAuthError):
        envelope_open(key, bytes(flipped))
    bad_version = b"\x09" + ct[1:]
    with pytest.raises(EnvelopeFormatError):
        envelope_open(key, bad_version)
    with pytest.raises(EnvelopeFormatError):
        envelope_open(key, ct[:10])


def test_envelope_nonce_is_fresh_by_default():
    assert envelope_seal(b"k", b"x") != envelope_seal(b"k", b"x")


def test_prp_all_ones_zero_is_identity(rng):
    key = PrpKey((1,) * 6, (0,) * 6)
    v = FIELD.random_vector(6, rng)
    assert key.apply(v) == v


def test_prp_conditional_uniformity_exhaustive():
    p = 251
    f = PrimeField(p)
    v, v2, x = 10, 200, 77
    counts = [0] * p
    for a in range(1, p):
        for b in range(p):
            key = PrpKey((a,), (b,), f)
            if key.apply((v,))[0] == x:
                counts[key.apply((v2,))[0]] += 1
    # a permutation never repeats x, every other value occurs exactly once
    assert counts[x] == 0
    assert all(c == 1 for i, c in enumerate(counts) if i != x)
    exp = sum(counts) / p
    chi2 = sum((c - exp) ** 2 / exp for c in counts)
    assert chi2 < (p - 1) + 3 * (2 * (p - 1)) ** 0.5


def test_hash_to_vector_flip_and_distribution():
    a = hash_to_vector(b"t", [b"\x00"], 8)
    b = hash_to_vector(b"t", [b"\x01"], 8)
    assert sum(x != y for x, y in zip(a, b)) >= 1
    f = PrimeField(251)
    counts = [0] * 251
    samples = 0
    for i in range(2000):
        for c in hash_to_vector(b"dist", [i.to_bytes(4, "big")], 50, f):
            counts[c] += 1
            samples += 1
    assert samples == 100_000
    exp = samples / 251
    chi2 = sum((c - exp) ** 2 / exp for c in counts)
    assert abs(chi2 - 250) < 3 * 500**0.5


def test_prf_frequency_and_serial(rng):
    k = PrfKey.random(rng)
    outs = [prf_eval(k, (i, 0, 7)) for i in range(4000)]
    assert len(set(outs)) == 4000
    bits = [o & 1 for o in outs]
    ones = sum(bits)
    n = len(bits)
    # monobit: |ones - n/2| within 3 sigma
    assert abs(ones - n / 2) < 3 * (n / 4) ** 0.5
    # serial pairs 00/01/10/11 roughly equal
    pairs = [0] * 4
    for i in range(0, n - 1, 2):
        pairs[2 * bits[i] + bits[i + 1]] += 1
    exp = sum(pairs) / 4
    chi2 = sum((c - exp) ** 2 / exp for c in pairs)
    assert chi2 < 3 + 3 * 6**0.5


def test_single_share_is_secret(rng):
    assert share(99, 1, rng) == (99,)


def test_partial_shares_independent_of_secret():
    f = PrimeField(251)
    n = 3
    for s in (0, 1, 250):
        r = random.Random(s + 1000)
        counts = [0] * 251
        for _ in range(25_100):
            counts[share(s, n, r, f)[0]] += 1
        exp = 25_100 / 251
        chi2 = sum((c - exp) ** 2 / exp for c in counts)
        assert abs(chi2 - 250) < 3 * 500**0.5
