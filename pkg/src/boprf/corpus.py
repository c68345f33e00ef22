"""Seeded synthetic password corpora for accuracy experiments."""

from __future__ import annotations

import random
from dataclasses import dataclass

__all__ = ["SyntheticCorpus", "random_word", "perturb", "synthetic_corpus"]

LETTERS = b"abcdefghijklmnopqrstuvwxyz"
SYMBOLS = LETTERS + b"0123456789"


def random_word(rng: random.Random, lo: int = 6, hi: int = 10) -> bytes:
    return bytes(rng.choice(LETTERS) for _ in range(rng.randint(lo, hi)))


def perturb(word: bytes, edits: int, rng: random.Random) -> bytes:
    """Apply ``edits`` random single-character insertions, deletions or substitutions."""
    w = bytearray(word)
    for _ in range(edits):
        op = rng.randrange(3) if len(w) > 1 else 0
        i = rng.randrange(len(w) + (op == 0))
        if op == 0:
            w.insert(i, rng.choice(SYMBOLS))
        elif op == 1:
            del w[i]
        else:
            w[i] = rng.choice([c for c in SYMBOLS if c != w[i]])
    return bytes(w)


@dataclass(frozen=True)
class SyntheticCorpus:
    blocked: list[bytes]
    positives: list[bytes]
    negatives: list[bytes]


def synthetic_corpus(
    seed: int,
    n_bases: int = 2000,
    variants: int = 2,
    n_pos: int = 1000,
    n_neg: int = 1000,
) -> SyntheticCorpus:
    """Base words with edit-distance-1 variants form the blocked universe.

    Positives are drawn from that universe; negatives are fresh words that
    are not in it.
    """
    rng = random.Random(seed)
    bases = sorted({random_word(rng) for _ in range(n_bases)})
    blocked = set(bases)
    for b in bases:
        for _ in range(variants):
            blocked.add(perturb(b, 1, rng))
    universe = sorted(blocked)
    positives = [rng.choice(universe) for _ in range(n_pos)]
    negatives: list[bytes] = []
    while len(negatives) < n_neg:
        w = random_word(rng)
        if w not in blocked:
            negatives.append(w)
    return SyntheticCorpus(universe, positives, negatives)
