"""Hamming-to-SUR embedding and the gcd-recovery blocklist test.

A bit vector ``v`` of length delta becomes the root set ``{2j + v_j}`` for
``j = 1..delta``; its polynomial ``P_v`` is evaluated on the public domain
``x_k = 2*delta + 1 + k``. Two vectors at Hamming distance ``h`` have root
sets with a symmetric difference of size ``2h``, which is the SUR distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .algebra import FIELD, EvalDomain, FieldError, Polynomial, PrimeField, poly_gcd, solve_linear

__all__ = [
    "ParameterError",
    "MetricParams",
    "bit_root",
    "root_set",
    "root_mask",
    "eval_domain",
    "map_bits",
    "hamming",
    "sur_distance",
    "sur_from_masks",
    "roots_in_range",
    "noisy_combine",
    "recover_gcd",
]


class ParameterError(ValueError):
    """Inconsistent protocol parameters."""


@dataclass(frozen=True)
class MetricParams:
    delta: int
    theta: int
    T: int
    t: int

    def __post_init__(self):
        if self.delta < 1:
            raise ParameterError("delta must be positive")
        if self.T != 2 * self.t:
            raise ParameterError(f"T must equal 2t (T={self.T}, t={self.t})")
        if not 0 <= self.t <= self.delta:
            raise ParameterError("t must lie in [0, delta]")
        if not self.delta < self.theta <= 2 * self.delta + 1:
            raise ParameterError(
                f"theta must satisfy delta < theta <= 2*delta+1 (delta={self.delta}, theta={self.theta})"
            )

    @classmethod
    def exact(cls, delta: int, t: int) -> "MetricParams":
        """theta = 2*delta + 1: the combined polynomial is fully interpolable."""
        return cls(delta, 2 * delta + 1, 2 * t, t)

    @classmethod
    def privacy(cls, delta: int, t: int) -> "MetricParams":
        """theta = delta + T + 1: just enough points to decode at the threshold."""
        return cls(delta, delta + 2 * t + 1, 2 * t, t)

    @classmethod
    def for_mode(cls, mode: str, delta: int, t: int) -> "MetricParams":
        if mode == "exact":
            return cls.exact(delta, t)
        if mode == "privacy":
            return cls.privacy(delta, t)
        raise ParameterError(f"unknown theta mode {mode!r}")

    @property
    def is_exact(self) -> bool:
        return self.theta == 2 * self.delta + 1

    @property
    def min_shared(self) -> int:
        """Smallest gcd degree that counts as a match: delta - T/2."""
        return self.delta - self.T // 2

    def domain(self, field: PrimeField = FIELD) -> EvalDomain:
        return eval_domain(self.delta, self.theta, field)


def bit_root(bit: int, j: int) -> int:
    """M(b, j) = 2j + b for 1-indexed position j; values lie in [2, 2*delta+1]."""
    return 2 * j + bit


def root_set(bits: Sequence[int]) -> frozenset[int]:
    return frozenset(bit_root(b, j) for j, b in enumerate(bits, start=1))


def root_mask(bits: Sequence[int]) -> int:
    """Root set as an int bitmask; bit ``r - 2`` is set for root ``r``."""
    mask = 0
    for j, b in enumerate(bits, start=1):
        mask |= 1 << (2 * j + b - 2)
    return mask


def sur_from_masks(m1: int, m2: int) -> int:
    return (m1 ^ m2).bit_count()


@lru_cache(maxsize=64)
def eval_domain(delta: int, theta: int, field: PrimeField = FIELD) -> EvalDomain:
    return EvalDomain([2 * delta + 1 + k for k in range(1, theta + 1)], field)


def _check_bits(bits: Sequence[int]) -> None:
    if any(b not in (0, 1) for b in bits):
        raise ValueError("bit vector entries must be 0 or 1")


def map_bits(bits: Sequence[int], X: EvalDomain) -> tuple[int, ...]:
    """Evaluations of P_v = prod (x - M(v_j, j)) on the domain."""
    _check_bits(bits)
    if len(X) < len(bits) + 1:
        raise ParameterError(f"theta={len(X)} is below delta+1={len(bits) + 1}")
    poly = Polynomial.from_roots(sorted(root_set(bits)), X.field)
    return X.evaluate(poly)


def hamming(a: Sequence[int], b: Sequence[int]) -> int:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} != {len(b)}")
    return sum(x != y for x, y in zip(a, b))


def sur_distance(
    v1: Sequence[int], v2: Sequence[int], X: EvalDomain, delta: int | None = None
) -> int:
    """deg P1 + deg P2 - 2 deg gcd(P1, P2) after interpolating both vectors.

    Pass ``delta`` to enforce the oracle-mode requirement theta >= 2*delta+1.
    """
    if delta is not None and len(X) < 2 * delta + 1:
        raise ParameterError(f"sur_distance needs theta >= {2 * delta + 1}, got {len(X)}")
    p1 = X.interpolate(v1)
    p2 = X.interpolate(v2)
    if p1.is_zero() or p2.is_zero():
        raise FieldError("zero vector has no root set")
    return p1.degree + p2.degree - 2 * poly_gcd(p1, p2).degree


def roots_in_range(v: Sequence[int], X: EvalDomain, delta: int) -> int | None:
    """Root mask of the interpolated polynomial, or None if it is not a bit-map image."""
    poly = X.interpolate(v)
    if poly.degree != delta or poly.lead != 1:
        return None
    mask = 0
    for j in range(1, delta + 1):
        z0 = poly(2 * j) == 0
        z1 = poly(2 * j + 1) == 0
        if z0 == z1:
            return None
        mask |= 1 << (2 * j + (0 if z0 else 1) - 2)
    return mask


def noisy_combine(
    v1: Sequence[int], v2: Sequence[int], r1: Sequence[int], r2: Sequence[int], field: PrimeField = FIELD
) -> tuple[int, ...]:
    """r2 * v1 + r1 * v2, componentwise."""
    if not len(v1) == len(v2) == len(r1) == len(r2):
        raise ValueError("vector length mismatch")
    p = field.p
    return tuple((b * a + d * c) % p for a, b, c, d in zip(v1, r2, v2, r1))


def recover_gcd(
    evals: Sequence[int], p_known: Polynomial, params: MetricParams, X: EvalDomain
) -> Polynomial | None:
    """Recover gcd(P_v, P_known) from evaluations of S*P_v + T*P_known.

    Returns the monic gcd when its degree is at least delta - T/2, else None.
    """
    if len(evals) != params.theta or len(X) != params.theta:
        raise ValueError(f"expected {params.theta} evaluations, got {len(evals)}")
    if params.is_exact:
        c = X.interpolate(evals)
        g = poly_gcd(c, p_known)
        return g if g.degree >= params.min_shared else None
    return _recover_bw(evals, p_known, params, X)


def _recover_bw(
    evals: Sequence[int], p_known: Polynomial, params: MetricParams, X: EvalDomain
) -> Polynomial | None:
    delta, theta = params.delta, params.theta
    if params.T == 0 or theta < delta + params.T + 1:
        raise ParameterError("rational recovery needs T >= 2 and theta >= delta + T + 1")
    field = X.field
    p = field.p
    pk = X.evaluate(p_known)
    powers = X._powers
    lo = max(0, math.ceil(delta - params.T / 2))
    for m in range(delta, lo - 1, -1):
        d = delta - m
        n_r = 2 * delta - m + 1
        if d + n_r > theta:
            continue
        rows, rhs = [], []
        for k in range(theta):
            ck, pw = evals[k], powers[k]
            row = [ck * pw[j] % p for j in range(d)]
            row.extend(-pk[k] * pw[j] % p for j in range(n_r))
            rows.append(row)
            rhs.append(-ck * pw[d] % p)
        sol = solve_linear(rows, rhs, field)
        if sol is None:
            continue
        q = Polynomial(sol[:d] + [1], field)
        g, rem = divmod(p_known, q)
        if rem.is_zero():
            return g.monic()
    return None
