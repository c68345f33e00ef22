"""Blocklist construction by greedy edit-ball coverage, file I/O, and FAR/FRR."""

from __future__ import annotations

import hashlib
import heapq
import hmac
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from rapidfuzz import process
from rapidfuzz.distance import Levenshtein

from .algebra import FIELD, FieldError, Polynomial
from .embed import EmbeddingKey, Scheme, embed
from .metric import MetricParams, map_bits, root_mask, roots_in_range, sur_from_masks

__all__ = [
    "Blocklist",
    "BlocklistFormatError",
    "AccuracyReport",
    "build_blocklist",
    "edit_balls",
    "greedy_coverage",
    "measure_accuracy",
    "is_blocked",
]

MAGIC = b"BOPF"
VERSION = 1
_HEADER = struct.Struct(">4sBBHHHI")


class BlocklistFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Blocklist:
    vectors: tuple[tuple[int, ...], ...]
    params: MetricParams
    key: EmbeddingKey
    raw_size: int
    items: tuple[bytes, ...] | None = None
    coverage: tuple[int, ...] = field(default=(), repr=False)

    def __post_init__(self):
        for v in self.vectors:
            if len(v) != self.params.theta:
                raise ValueError("blocklist vector length differs from theta")

    def __len__(self) -> int:
        return len(self.vectors)

    @classmethod
    def from_items(
        cls,
        items: Sequence[bytes],
        key: EmbeddingKey,
        params: MetricParams,
        raw_size: int | None = None,
        coverage: Sequence[int] = (),
    ) -> "Blocklist":
        X = params.domain()
        bits = [embed(key, it) for it in items]
        obj = cls(
            tuple(map_bits(b, X) for b in bits),
            params,
            key,
            len(items) if raw_size is None else raw_size,
            tuple(items),
            tuple(coverage),
        )
        obj.__dict__["root_masks"] = tuple(root_mask(b) for b in bits)
        return obj

    def rekey(self, key: EmbeddingKey) -> "Blocklist":
        """Re-embed the raw items under a new embedding key."""
        if self.items is None:
            raise ValueError("blocklist has no raw items to re-embed")
        return Blocklist.from_items(self.items, key, self.params, self.raw_size, self.coverage)

    def prefix(self, n: int) -> "Blocklist":
        obj = Blocklist(
            self.vectors[:n],
            self.params,
            self.key,
            self.raw_size,
            None if self.items is None else self.items[:n],
            self.coverage[:n],
        )
        if "root_masks" in self.__dict__:
            obj.__dict__["root_masks"] = self.root_masks[:n]
        return obj

    def with_threshold(self, t: int) -> "Blocklist":
        params = MetricParams(self.params.delta, self.params.theta, 2 * t, t)
        obj = Blocklist(self.vectors, params, self.key, self.raw_size, self.items, self.coverage)
        for name in ("root_masks", "polynomials"):
            if name in self.__dict__:
                obj.__dict__[name] = self.__dict__[name]
        return obj

    @cached_property
    def polynomials(self) -> tuple[Polynomial, ...]:
        if "root_masks" in self.__dict__:
            return tuple(Polynomial.from_roots(_mask_roots(m)) for m in self.root_masks)
        X = self.params.domain()
        return tuple(X.interpolate(v) for v in self.vectors)

    @cached_property
    def root_masks(self) -> tuple[int, ...]:
        X = self.params.domain()
        out = []
        for v in self.vectors:
            m = roots_in_range(v, X, self.params.delta)
            if m is None:
                raise ValueError("blocklist vector is not a bit-map image")
            out.append(m)
        return tuple(out)

    # file format

    def to_bytes(self) -> bytes:
        p = self.params
        head = _HEADER.pack(MAGIC, VERSION, self.key.scheme, p.delta, p.theta, p.T, len(self.vectors))
        body = b"".join(FIELD.vector_to_bytes(v) for v in self.vectors)
        mac = hmac.new(self.key.seed, head + body, hashlib.sha256).digest()
        return head + body + mac

    @classmethod
    def from_bytes(
        cls, data: bytes, key: EmbeddingKey, items: Sequence[bytes] | None = None, raw_size: int | None = None
    ) -> "Blocklist":
        if len(data) < _HEADER.size + 32:
            raise BlocklistFormatError("blocklist file truncated")
        magic, ver, scheme, delta, theta, T, count = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BlocklistFormatError("bad magic")
        if ver != VERSION:
            raise BlocklistFormatError(f"unsupported version {ver}")
        vec_len = theta * FIELD.nbytes
        end = _HEADER.size + count * vec_len
        if len(data) != end + 32:
            raise BlocklistFormatError("blocklist length does not match header")
        expect = hmac.new(key.seed, data[:end], hashlib.sha256).digest()
        if not hmac.compare_digest(expect, data[end:]):
            raise BlocklistFormatError("checksum mismatch (wrong key or corrupted file)")
        if scheme != key.scheme or delta != key.delta:
            raise BlocklistFormatError("embedding key does not match blocklist header")
        if T % 2:
            raise BlocklistFormatError("odd threshold T")
        params = MetricParams(delta, theta, T, T // 2)
        try:
            vectors = tuple(
                FIELD.vector_from_bytes(data[off : off + vec_len], theta)
                for off in range(_HEADER.size, end, vec_len)
            )
        except FieldError as e:
            raise BlocklistFormatError(str(e)) from None
        if items is not None and len(items) != count:
            raise BlocklistFormatError("item sidecar count does not match")
        return cls(vectors, params, key, count if raw_size is None else raw_size, None if items is None else tuple(items))

    def save(self, path: str | Path) -> None:
        """Write the BOPF file plus ``.key`` and (if present) ``.items`` sidecars."""
        path = Path(path)
        path.write_bytes(self.to_bytes())
        Path(str(path) + ".key").write_bytes(self.key.to_bytes())
        if self.items is not None:
            blob = struct.pack(">II", len(self.items), self.raw_size)
            blob += b"".join(struct.pack(">I", len(it)) + it for it in self.items)
            Path(str(path) + ".items").write_bytes(blob)

    @classmethod
    def load(cls, path: str | Path, key: EmbeddingKey | None = None) -> "Blocklist":
        path = Path(path)
        if key is None:
            key = EmbeddingKey.from_bytes(Path(str(path) + ".key").read_bytes())
        items = raw_size = None
        side = Path(str(path) + ".items")
        if side.exists():
            items, raw_size = _read_items(side.read_bytes())
        return cls.from_bytes(path.read_bytes(), key, items, raw_size)


def _mask_roots(mask: int) -> list[int]:
    return [i + 2 for i in range(mask.bit_length()) if (mask >> i) & 1]


def _read_items(blob: bytes) -> tuple[list[bytes], int]:
    try:
        count, raw_size = struct.unpack_from(">II", blob)
        off = 8
        items = []
        for _ in range(count):
            (n,) = struct.unpack_from(">I", blob, off)
            off += 4
            if off + n > len(blob):
                raise BlocklistFormatError("item sidecar truncated")
            items.append(blob[off : off + n])
            off += n
    except struct.error:
        raise BlocklistFormatError("item sidecar truncated") from None
    if off != len(blob):
        raise BlocklistFormatError("trailing bytes in item sidecar")
    return items, raw_size


def edit_balls(items: Sequence[bytes], t: int, chunk: int = 1024) -> list[np.ndarray]:
    """For each item, indices of all items within edit distance t (itself included)."""
    if t == 0:
        return [np.array([i]) for i in range(len(items))]
    strs = [it.decode("latin-1") for it in items]
    balls: list[np.ndarray] = []
    for start in range(0, len(strs), chunk):
        block = process.cdist(
            strs[start : start + chunk],
            strs,
            scorer=Levenshtein.distance,
            score_cutoff=t,
            dtype=np.int32,
            workers=1,
        )
        balls.extend(np.flatnonzero(row <= t) for row in block)
    return balls


def greedy_coverage(balls: Sequence[np.ndarray], max_size: int) -> tuple[list[int], list[int]]:
    """Lazy greedy max coverage; returns (selected indices, cumulative coverage).

    Ties break by full ball size then index, and zero-gain picks continue in
    that order, so selections for smaller max_size are prefixes of larger ones.
    """
    covered = np.zeros(len(balls), dtype=bool)
    heap = [(-len(b), -len(b), i) for i, b in enumerate(balls)]
    heapq.heapify(heap)
    chosen: list[int] = []
    cumulative: list[int] = []
    total = 0
    while heap and len(chosen) < max_size:
        neg_gain, neg_size, i = heapq.heappop(heap)
        gain = int(np.count_nonzero(~covered[balls[i]]))
        if gain != -neg_gain:
            heapq.heappush(heap, (-gain, neg_size, i))
            continue
        covered[balls[i]] = True
        total += gain
        chosen.append(i)
        cumulative.append(total)
    return chosen, cumulative


def build_blocklist(
    U_blk: Sequence[bytes], t: int, max_size: int, k: EmbeddingKey, params: MetricParams
) -> Blocklist:
    """Select up to max_size items of U_blk by greedy edit-ball coverage and embed them."""
    if max_size < 1:
        raise ValueError("max_size must be at least 1")
    items = sorted(set(U_blk))
    if not items:
        raise ValueError("empty blocklist corpus")
    if k.delta != params.delta:
        raise ValueError("embedding key delta differs from params.delta")
    chosen, cumulative = greedy_coverage(edit_balls(items, t), max_size)
    return Blocklist.from_items([items[i] for i in chosen], k, params, len(items), cumulative)


def _masks_blocked(masks: Sequence[int], target: int, T: int) -> bool:
    return any(sur_from_masks(m, target) <= T for m in masks)


def is_blocked(blocklist: Blocklist, w: bytes) -> bool:
    """Plaintext decision: exists l in L with SUR(map(embed(w)), l) <= T."""
    return _masks_blocked(blocklist.root_masks, root_mask(embed(blocklist.key, w)), blocklist.params.T)


@dataclass(frozen=True)
class AccuracyReport:
    far: float
    frr: float
    T: int
    size: int
    theta: int
    n_pos: int
    n_neg: int

    def as_dict(self) -> dict:
        return {
            "far": self.far,
            "frr": self.frr,
            "T": self.T,
            "L": self.size,
            "theta": self.theta,
            "positives": self.n_pos,
            "negatives": self.n_neg,
        }


def _blocked_flags(blocklist: Blocklist, samples: Sequence[bytes]) -> np.ndarray:
    T = blocklist.params.T
    masks = blocklist.root_masks
    targets = [root_mask(embed(blocklist.key, s)) for s in samples]
    if not masks:
        return np.zeros(len(samples), dtype=bool)
    if blocklist.params.delta <= 32:
        arr = np.array(masks, dtype=np.uint64)
        return np.array(
            [bool((np.bitwise_count(arr ^ np.uint64(t)) <= T).any()) for t in targets], dtype=bool
        )
    return np.array([_masks_blocked(masks, t, T) for t in targets], dtype=bool)


def measure_accuracy(
    blocklist: Blocklist, positives: Sequence[bytes], negatives: Sequence[bytes]
) -> AccuracyReport:
    """FAR = share of positives not blocked; FRR = share of negatives blocked."""
    if not positives or not negatives:
        raise ValueError("need nonempty positive and negative samples")
    pos = _blocked_flags(blocklist, positives)
    neg = _blocked_flags(blocklist, negatives)
    return AccuracyReport(
        far=float(1.0 - pos.mean()),
        frr=float(neg.mean()),
        T=blocklist.params.T,
        size=len(blocklist),
        theta=blocklist.params.theta,
        n_pos=len(positives),
        n_neg=len(negatives),
    )
