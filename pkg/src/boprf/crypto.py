"""Keyed primitives: affine permutation, PRFs, hash-to-field, sharing, envelope."""

from __future__ import annotations

import hashlib
import hmac
import os
import random
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .algebra import FIELD, FieldError, PrimeField

__all__ = [
    "LAMBDA_BYTES",
    "PrpKey",
    "PrfKey",
    "hash_to_vector",
    "hash_bytes",
    "prf_eval",
    "f2_eval",
    "share",
    "reconstruct",
    "EnvelopeError",
    "EnvelopeAuthError",
    "EnvelopeFormatError",
    "envelope_seal",
    "envelope_open",
]

LAMBDA_BYTES = 16


@dataclass(frozen=True)
class PrpKey:
    """Key of the permutation v -> a*v + b on F^theta."""

    a: tuple[int, ...]
    b: tuple[int, ...]
    field: PrimeField = FIELD

    def __post_init__(self):
        if len(self.a) != len(self.b):
            raise FieldError("PRP key halves differ in length")
        if any(x % self.field.p == 0 for x in self.a):
            raise FieldError("PRP multiplier has a zero component")

    @classmethod
    def random(cls, theta: int, rng: random.Random, field: PrimeField = FIELD) -> "PrpKey":
        a = tuple(field.random_nonzero(rng) for _ in range(theta))
        b = field.random_vector(theta, rng)
        return cls(a, b, field)

    @classmethod
    def identity(cls, theta: int, field: PrimeField = FIELD) -> "PrpKey":
        return cls((1,) * theta, (0,) * theta, field)

    @property
    def theta(self) -> int:
        return len(self.a)

    def apply(self, v: Sequence[int]) -> tuple[int, ...]:
        f = self.field
        return f.vadd(f.vmul(self.a, v), self.b)

    def invert(self, w: Sequence[int]) -> tuple[int, ...]:
        f = self.field
        return f.vmul(f.vsub(w, self.b), f.vinv(self.a))

    def to_bytes(self) -> bytes:
        return self.field.vector_to_bytes(self.a) + self.field.vector_to_bytes(self.b)

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()


@dataclass(frozen=True)
class PrfKey:
    key: bytes

    def __post_init__(self):
        if len(self.key) != LAMBDA_BYTES:
            raise ValueError(f"PRF key must be {LAMBDA_BYTES} bytes")

    @classmethod
    def random(cls, rng: random.Random) -> "PrfKey":
        return cls(rng.randbytes(LAMBDA_BYTES))


def _encode_parts(parts: Iterable[bytes]) -> bytes:
    return b"".join(struct.pack(">I", len(x)) + x for x in parts)


def hash_bytes(domain_tag: bytes, inputs: Iterable[bytes], size: int = 32) -> bytes:
    """Domain-separated SHAKE-256 over length-prefixed inputs."""
    h = hashlib.shake_256(_encode_parts([domain_tag]))
    h.update(_encode_parts(inputs))
    return h.digest(size)


def _sample_stream(stream, n: int, field: PrimeField) -> tuple[int, ...]:
    """Rejection-sample n field elements from a byte-stream factory."""
    nb = field.nbytes
    mask = (1 << field.bits) - 1
    out: list[int] = []
    need = n * nb + 2 * nb
    pos = 0
    buf = stream(need)
    while len(out) < n:
        if pos + nb > len(buf):
            need *= 2
            buf = stream(need)
        x = int.from_bytes(buf[pos : pos + nb], "big") & mask
        pos += nb
        if x < field.p:
            out.append(x)
    return tuple(out)


def hash_to_vector(
    domain_tag: bytes, inputs: Sequence[bytes], theta: int, field: PrimeField = FIELD
) -> tuple[int, ...]:
    """Random-oracle style map to F^theta via SHAKE-256 and rejection sampling."""
    h = hashlib.shake_256(_encode_parts([b"h2v", domain_tag]))
    h.update(struct.pack(">I", theta))
    h.update(_encode_parts(inputs))
    return _sample_stream(h.digest, theta, field)


def prf_eval(k: PrfKey, v: Sequence[int], field: PrimeField = FIELD) -> int:
    """F1: keyed BLAKE2b over the canonical vector bytes, reduced into F by rejection."""
    data = field.vector_to_bytes(v)
    nb = field.nbytes
    mask = (1 << field.bits) - 1
    ctr = 0
    while True:
        d = hashlib.blake2b(
            struct.pack(">I", ctr) + data, key=k.key, digest_size=max(nb, 16), person=b"boprf-F1"
        ).digest()
        x = int.from_bytes(d[:nb], "big") & mask
        if x < field.p:
            return x
        ctr += 1


def f2_eval(key: bytes, data: bytes) -> bytes:
    """F2: HMAC-SHA256 truncated to lambda bits."""
    return hmac.new(key, data, hashlib.sha256).digest()[:LAMBDA_BYTES]


def share(secret: int, n: int, rng: random.Random, field: PrimeField = FIELD) -> tuple[int, ...]:
    """Additive n-out-of-n sharing."""
    if n < 1:
        raise ValueError("need at least one share")
    head = [field.random(rng) for _ in range(n - 1)]
    return tuple(head) + ((secret - sum(head)) % field.p,)


def reconstruct(shares: Sequence[int], field: PrimeField = FIELD) -> int:
    if not shares:
        raise ValueError("empty share set")
    return sum(shares) % field.p


class EnvelopeError(Exception):
    pass


class EnvelopeAuthError(EnvelopeError):
    """Wrong key or tampered ciphertext."""


class EnvelopeFormatError(EnvelopeError):
    """Ciphertext is structurally malformed."""


_ENV_VERSION = 1
_NONCE = 12
_TAG = 16


def _envelope_key(key: bytes) -> bytes:
    return HKDF(hashes.SHA256(), 32, salt=None, info=b"boprf envelope v1").derive(key)


def envelope_seal(key: bytes, payload: bytes, nonce: bytes | None = None) -> bytes:
    nonce = os.urandom(_NONCE) if nonce is None else nonce
    if len(nonce) != _NONCE:
        raise ValueError("nonce must be 12 bytes")
    header = bytes([_ENV_VERSION])
    return header + nonce + AESGCM(_envelope_key(key)).encrypt(nonce, payload, header)


def envelope_open(key: bytes, ct: bytes) -> bytes:
    if len(ct) < 1 + _NONCE + _TAG:
        raise EnvelopeFormatError("envelope too short")
    if ct[0] != _ENV_VERSION:
        raise EnvelopeFormatError(f"unknown envelope version {ct[0]}")
    nonce = ct[1 : 1 + _NONCE]
    try:
        return AESGCM(_envelope_key(key)).decrypt(nonce, ct[1 + _NONCE :], ct[:1])
    except InvalidTag:
        raise EnvelopeAuthError("envelope authentication failed") from None
