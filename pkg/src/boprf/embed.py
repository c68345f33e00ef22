"""Keyed embeddings into Hamming space, plus edit distance helpers.

Passwords use a keyed SimHash over character 2- and 3-grams. Binaries use a
simplified sdhash-like digest: high-entropy 64-byte windows are inserted into
a delta-bit Bloom filter with five keyed hash functions.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
import warnings
from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

from rapidfuzz.distance import Levenshtein

from .algebra import EvalDomain
from .metric import map_bits

__all__ = [
    "Scheme",
    "EmbeddingKey",
    "ShortInputWarning",
    "embed",
    "embed_password",
    "embed_binary",
    "embed_to_field",
    "levenshtein",
    "expand_edit_ball",
    "bits_to_int",
    "WINDOW",
    "STRIDE",
    "BLOOM_HASHES",
]

WINDOW = 64
STRIDE = 8
BLOOM_HASHES = 5
DEFAULT_ALPHABET = b"abcdefghijklmnopqrstuvwxyz0123456789"


class Scheme(IntEnum):
    PASSWORD = 1
    BINARY = 2


class ShortInputWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EmbeddingKey:
    seed: bytes
    scheme: Scheme
    delta: int

    SIZE = 35

    def __post_init__(self):
        if len(self.seed) != 32:
            raise ValueError("embedding seed must be 32 bytes")
        if not 1 <= self.delta <= 0xFFFF:
            raise ValueError("delta out of range")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @classmethod
    def random(cls, scheme: Scheme, delta: int, rng: random.Random) -> "EmbeddingKey":
        return cls(rng.randbytes(32), scheme, delta)

    def to_bytes(self) -> bytes:
        return struct.pack(">BH", self.scheme, self.delta) + self.seed

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmbeddingKey":
        if len(data) != cls.SIZE:
            raise ValueError(f"embedding key must be {cls.SIZE} bytes")
        scheme, delta = struct.unpack(">BH", data[:3])
        return cls(data[3:], Scheme(scheme), delta)


def _keyed(seed: bytes, label: bytes, data: bytes, size: int) -> bytes:
    h = hashlib.shake_256(seed + label + struct.pack(">I", len(data)) + data)
    return h.digest(size)


def bits_to_int(bits: Sequence[int]) -> int:
    out = 0
    for i, b in enumerate(bits):
        out |= b << i
    return out


def _int_to_bits(x: int, n: int) -> tuple[int, ...]:
    return tuple((x >> i) & 1 for i in range(n))


def embed_password(k: EmbeddingKey, pw: bytes) -> tuple[int, ...]:
    """delta-bit keyed SimHash of the 2-grams and 3-grams of ``^pw$``."""
    if k.scheme != Scheme.PASSWORD:
        raise ValueError("key is not a password-simhash key")
    delta = k.delta
    nbytes = (delta + 7) // 8
    s = b"^" + pw + b"$"
    acc = [0] * delta
    for n in (2, 3):
        for i in range(len(s) - n + 1):
            h = int.from_bytes(_keyed(k.seed, b"sh%d" % n, s[i : i + n], nbytes), "little")
            for j in range(delta):
                acc[j] += 1 if (h >> j) & 1 else -1
    return tuple(1 if a > 0 else 0 for a in acc)


def _entropy(window: bytes) -> float:
    n = len(window)
    return -sum(c / n * math.log2(c / n) for c in Counter(window).values())


def embed_binary(k: EmbeddingKey, data: bytes) -> tuple[int, ...]:
    """Bloom-filter digest of the top-entropy 64-byte windows.

    About delta/8 windows are kept, ranked by entropy (one decimal) and then
    by keyed hash, so the selection behaves like a keyed bottom-k sketch.
    """
    if k.scheme != Scheme.BINARY:
        raise ValueError("key is not a binary-bloom key")
    delta = k.delta
    if len(data) < WINDOW:
        warnings.warn(
            f"input of {len(data)} bytes is shorter than the {WINDOW}-byte window",
            ShortInputWarning,
            stacklevel=2,
        )
        return (0,) * delta
    budget = max(1, delta // 8)
    scored = {}
    for off in range(0, len(data) - WINDOW + 1, STRIDE):
        w = data[off : off + WINDOW]
        if w in scored:
            continue
        rank = int.from_bytes(_keyed(k.seed, b"rank", w, 8), "big")
        scored[w] = (-round(_entropy(w), 1), rank)
    chosen = sorted(scored, key=scored.__getitem__)[:budget]
    filt = 0
    for w in chosen:
        h = _keyed(k.seed, b"bloom", w, 4 * BLOOM_HASHES)
        for i in range(BLOOM_HASHES):
            filt |= 1 << (int.from_bytes(h[4 * i : 4 * i + 4], "big") % delta)
    return _int_to_bits(filt, delta)


def embed(k: EmbeddingKey, data: bytes) -> tuple[int, ...]:
    if k.scheme == Scheme.PASSWORD:
        return embed_password(k, data)
    return embed_binary(k, data)


def embed_to_field(k: EmbeddingKey, data: bytes, X: EvalDomain) -> tuple[int, ...]:
    """map_bits(embed(k, data)): the vector v the protocol works with."""
    return map_bits(embed(k, data), X)


def levenshtein(a: bytes, b: bytes) -> int:
    return Levenshtein.distance(a.decode("latin-1"), b.decode("latin-1"))


def expand_edit_ball(
    words: Iterable[bytes], radius: int = 1, alphabet: bytes = DEFAULT_ALPHABET
) -> list[bytes]:
    """All strings within ``radius`` single-character edits of any word, sorted."""
    out: set[bytes] = set(words)
    frontier = set(out)
    symbols = [bytes([c]) for c in alphabet]
    for _ in range(radius):
        nxt = set()
        for w in frontier:
            for i in range(len(w) + 1):
                for c in symbols:
                    nxt.add(w[:i] + c + w[i:])
                if i < len(w):
                    nxt.add(w[:i] + w[i + 1 :])
                    for c in symbols:
                        nxt.add(w[:i] + c + w[i + 1 :])
        nxt -= out
        out |= nxt
        frontier = nxt
    return sorted(out)
