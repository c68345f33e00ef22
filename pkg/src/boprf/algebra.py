"""Prime-field arithmetic and dense polynomials over GF(p).

Field elements are plain Python ints kept in ``[0, p)``; vectors are tuples of
ints. :class:`PrimeField` is generic over the modulus so the same code paths
run over the production 128-bit field and small test fields.
"""

from __future__ import annotations

import random
import struct
from functools import cached_property
from typing import Iterable, Sequence

__all__ = [
    "P128",
    "FIELD",
    "FieldError",
    "PrimeField",
    "Polynomial",
    "EvalDomain",
    "poly_gcd",
    "is_probable_prime",
    "solve_linear",
]

# Largest prime below 2**128.
P128 = (1 << 128) - 159

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71)


class FieldError(ValueError):
    """Domain error in field or polynomial arithmetic."""


def is_probable_prime(n: int) -> bool:
    """Miller-Rabin with a fixed witness set (deterministic below 3.3e24)."""
    if n < 2:
        return False
    for q in _MR_BASES:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


class PrimeField:
    """The field of integers modulo a prime ``p``."""

    __slots__ = ("p", "nbytes", "__dict__")

    def __init__(self, p: int):
        if not is_probable_prime(p):
            raise FieldError(f"modulus {p} is not prime")
        self.p = p
        self.nbytes = (p.bit_length() + 7) // 8

    def __repr__(self) -> str:
        return f"PrimeField({self.p})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self) -> int:
        return hash(("PrimeField", self.p))

    @property
    def bits(self) -> int:
        return self.p.bit_length()

    # scalar ops

    def __call__(self, value: int) -> int:
        return value % self.p

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.p

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def neg(self, a: int) -> int:
        return -a % self.p

    def inv(self, a: int) -> int:
        a %= self.p
        if a == 0:
            raise FieldError("inversion of zero")
        return pow(a, -1, self.p)

    def div(self, a: int, b: int) -> int:
        return a * self.inv(b) % self.p

    def random(self, rng: random.Random) -> int:
        return rng.randrange(self.p)

    def random_nonzero(self, rng: random.Random) -> int:
        return 1 + rng.randrange(self.p - 1)

    # vector ops (componentwise)

    def random_vector(self, n: int, rng: random.Random) -> tuple[int, ...]:
        return tuple(rng.randrange(self.p) for _ in range(n))

    def vadd(self, u: Sequence[int], v: Sequence[int]) -> tuple[int, ...]:
        _check_len(u, v)
        p = self.p
        return tuple((a + b) % p for a, b in zip(u, v))

    def vsub(self, u: Sequence[int], v: Sequence[int]) -> tuple[int, ...]:
        _check_len(u, v)
        p = self.p
        return tuple((a - b) % p for a, b in zip(u, v))

    def vmul(self, u: Sequence[int], v: Sequence[int]) -> tuple[int, ...]:
        """Hadamard product."""
        _check_len(u, v)
        p = self.p
        return tuple(a * b % p for a, b in zip(u, v))

    def vneg(self, u: Sequence[int]) -> tuple[int, ...]:
        p = self.p
        return tuple(-a % p for a in u)

    def vinv(self, u: Sequence[int]) -> tuple[int, ...]:
        return tuple(self.inv(a) for a in u)

    def vsum(self, vectors: Iterable[Sequence[int]], n: int) -> tuple[int, ...]:
        acc = [0] * n
        for v in vectors:
            if len(v) != n:
                raise FieldError("vector length mismatch")
            for k, a in enumerate(v):
                acc[k] += a
        p = self.p
        return tuple(a % p for a in acc)

    # serialization: fixed-width big-endian

    def to_bytes(self, a: int) -> bytes:
        return a.to_bytes(self.nbytes, "big")

    def from_bytes(self, data: bytes) -> int:
        if len(data) != self.nbytes:
            raise FieldError(f"expected {self.nbytes} bytes, got {len(data)}")
        a = int.from_bytes(data, "big")
        if a >= self.p:
            raise FieldError("non-canonical field element")
        return a

    def vector_to_bytes(self, v: Sequence[int]) -> bytes:
        n = self.nbytes
        return b"".join(a.to_bytes(n, "big") for a in v)

    def vector_from_bytes(self, data: bytes, length: int | None = None) -> tuple[int, ...]:
        n = self.nbytes
        if len(data) % n:
            raise FieldError("vector byte length is not a multiple of the element size")
        if length is not None and len(data) != length * n:
            raise FieldError(f"expected {length} elements, got {len(data) // n}")
        out = tuple(int.from_bytes(data[i : i + n], "big") for i in range(0, len(data), n))
        if any(a >= self.p for a in out):
            raise FieldError("non-canonical field element")
        return out


def _check_len(u: Sequence[int], v: Sequence[int]) -> None:
    if len(u) != len(v):
        raise FieldError(f"vector length mismatch: {len(u)} != {len(v)}")


FIELD = PrimeField(P128)


class Polynomial:
    """Dense polynomial, coefficients lowest degree first, no trailing zeros."""

    __slots__ = ("coeffs", "field")

    def __init__(self, coeffs: Iterable[int] = (), field: PrimeField = FIELD):
        p = field.p
        cs = [c % p for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        self.coeffs: tuple[int, ...] = tuple(cs)
        self.field = field

    @classmethod
    def _raw(cls, coeffs: list[int], field: PrimeField) -> "Polynomial":
        # coeffs already reduced
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        obj = cls.__new__(cls)
        obj.coeffs = tuple(coeffs)
        obj.field = field
        return obj

    # constructors

    @classmethod
    def zero(cls, field: PrimeField = FIELD) -> "Polynomial":
        return cls((), field)

    @classmethod
    def constant(cls, c: int, field: PrimeField = FIELD) -> "Polynomial":
        return cls((c,), field)

    @classmethod
    def from_roots(cls, roots: Iterable[int], field: PrimeField = FIELD) -> "Polynomial":
        """Monic polynomial vanishing exactly on ``roots`` (one factor per root)."""
        p = field.p
        cs = [1]
        for s in roots:
            s %= p
            nxt = [0] * (len(cs) + 1)
            for i, c in enumerate(cs):
                nxt[i + 1] += c
                nxt[i] -= c * s
            cs = [c % p for c in nxt]
        return cls._raw(cs, field)

    @classmethod
    def random(cls, degree: int, rng: random.Random, field: PrimeField = FIELD) -> "Polynomial":
        """Uniform polynomial of exactly ``degree`` (leading coefficient nonzero)."""
        if degree < 0:
            raise FieldError("degree must be non-negative")
        cs = [field.random(rng) for _ in range(degree)]
        cs.append(field.random_nonzero(rng))
        return cls._raw(cs, field)

    @classmethod
    def interpolate(
        cls, points: Sequence[tuple[int, int]], field: PrimeField = FIELD
    ) -> "Polynomial":
        """Lagrange interpolation: the unique polynomial of degree < len(points)."""
        xs = [x % field.p for x, _ in points]
        if len(set(xs)) != len(xs):
            raise FieldError("duplicate x-coordinates")
        if not xs:
            return cls.zero(field)
        basis = _lagrange_basis(tuple(xs), field)
        return cls._raw(_combine_basis(basis, [y for _, y in points], field.p), field)

    # properties

    @property
    def degree(self) -> int:
        """Degree, with -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    @property
    def lead(self) -> int:
        return self.coeffs[-1] if self.coeffs else 0

    def is_zero(self) -> bool:
        return not self.coeffs

    def __repr__(self) -> str:
        return f"Polynomial({list(self.coeffs)})"

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Polynomial)
            and other.field == self.field
            and other.coeffs == self.coeffs
        )

    def __hash__(self) -> int:
        return hash((self.coeffs, self.field.p))

    def __len__(self) -> int:
        return len(self.coeffs)

    # evaluation

    def __call__(self, x: int) -> int:
        p = self.field.p
        acc = 0
        for c in reversed(self.coeffs):
            acc = (acc * x + c) % p
        return acc

    def evaluate_many(self, xs: Iterable[int]) -> tuple[int, ...]:
        return tuple(self(x) for x in xs)

    # arithmetic

    def _coerce(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return NotImplemented  # type: ignore[return-value]
        if other.field != self.field:
            raise FieldError("polynomials over different fields")
        return other

    def __add__(self, other: "Polynomial") -> "Polynomial":
        other = self._coerce(other)
        a, b = self.coeffs, other.coeffs
        if len(a) < len(b):
            a, b = b, a
        p = self.field.p
        out = list(a)
        for i, c in enumerate(b):
            out[i] = (out[i] + c) % p
        return Polynomial._raw(out, self.field)

    def __neg__(self) -> "Polynomial":
        p = self.field.p
        return Polynomial._raw([-c % p for c in self.coeffs], self.field)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-self._coerce(other))

    def __mul__(self, other: "Polynomial | int") -> "Polynomial":
        if isinstance(other, int):
            return self.scale(other)
        other = self._coerce(other)
        a, b = self.coeffs, other.coeffs
        if not a or not b:
            return Polynomial.zero(self.field)
        out = [0] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    out[i + j] += x * y
        p = self.field.p
        return Polynomial._raw([c % p for c in out], self.field)

    __rmul__ = __mul__

    def scale(self, c: int) -> "Polynomial":
        p = self.field.p
        c %= p
        return Polynomial._raw([x * c % p for x in self.coeffs], self.field)

    def monic(self) -> "Polynomial":
        if self.is_zero():
            return self
        return self.scale(self.field.inv(self.lead))

    def __divmod__(self, other: "Polynomial") -> tuple["Polynomial", "Polynomial"]:
        other = self._coerce(other)
        if other.is_zero():
            raise FieldError("division by the zero polynomial")
        p = self.field.p
        rem = list(self.coeffs)
        d = other.coeffs
        dn = len(d) - 1
        if len(rem) <= dn:
            return Polynomial.zero(self.field), self
        inv_lead = pow(d[-1], -1, p)
        quot = [0] * (len(rem) - dn)
        for i in range(len(rem) - 1, dn - 1, -1):
            c = rem[i] % p
            if c == 0:
                continue
            q = c * inv_lead % p
            quot[i - dn] = q
            base = i - dn
            for j in range(dn):
                rem[base + j] -= q * d[j]
            rem[i] = 0
        return (
            Polynomial._raw(quot, self.field),
            Polynomial._raw([c % p for c in rem[:dn]], self.field),
        )

    def __floordiv__(self, other: "Polynomial") -> "Polynomial":
        return divmod(self, other)[0]

    def __mod__(self, other: "Polynomial") -> "Polynomial":
        return divmod(self, other)[1]

    # serialization: u32 count + fixed-width coefficients

    def to_bytes(self) -> bytes:
        return struct.pack(">I", len(self.coeffs)) + self.field.vector_to_bytes(self.coeffs)

    @classmethod
    def from_bytes(cls, data: bytes, field: PrimeField = FIELD) -> "Polynomial":
        if len(data) < 4:
            raise FieldError("truncated polynomial")
        (count,) = struct.unpack(">I", data[:4])
        coeffs = field.vector_from_bytes(data[4:], count)
        if coeffs and coeffs[-1] == 0:
            raise FieldError("non-canonical polynomial (trailing zero)")
        return cls._raw(list(coeffs), field)


def poly_gcd(f: Polynomial, g: Polynomial) -> Polynomial:
    """Monic greatest common divisor; ``gcd(f, 0) = monic(f)``."""
    if f.field != g.field:
        raise FieldError("polynomials over different fields")
    a, b = f, g
    if a.degree < b.degree:
        a, b = b, a
    while not b.is_zero():
        a, b = b, a % b
    return a.monic()


def _lagrange_basis(xs: tuple[int, ...], field: PrimeField) -> list[list[int]]:
    """Coefficient lists of the Lagrange basis polynomials for ``xs``."""
    p = field.p
    n = len(xs)
    # master polynomial Z(x) = prod (x - x_i)
    z = Polynomial.from_roots(xs, field).coeffs
    basis = []
    for xi in xs:
        # synthetic division Z / (x - xi)
        q = [0] * n
        acc = 0
        for k in range(n, 0, -1):
            acc = (acc * xi + z[k]) % p
            q[k - 1] = acc
        denom = 1
        for xj in xs:
            if xj != xi:
                denom = denom * (xi - xj) % p
        w = pow(denom, -1, p)
        basis.append([c * w % p for c in q])
    return basis


def _combine_basis(basis: list[list[int]], ys: Sequence[int], p: int) -> list[int]:
    n = len(basis)
    out = [0] * n
    for row, y in zip(basis, ys):
        if y:
            for j, c in enumerate(row):
                out[j] += y * c
    return [c % p for c in out]


class EvalDomain:
    """Fixed, public, pairwise-distinct evaluation points with cached interpolation."""

    __slots__ = ("points", "field", "__dict__")

    def __init__(self, points: Sequence[int], field: PrimeField = FIELD):
        pts = tuple(x % field.p for x in points)
        if len(set(pts)) != len(pts):
            raise FieldError("evaluation points must be pairwise distinct")
        self.points = pts
        self.field = field

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"EvalDomain(theta={len(self.points)}, first={self.points[:1]})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EvalDomain) and other.points == self.points and other.field == self.field

    def __hash__(self) -> int:
        return hash((self.points, self.field.p))

    @cached_property
    def _columns(self) -> list[tuple[int, ...]]:
        basis = _lagrange_basis(self.points, self.field)
        return [tuple(col) for col in zip(*basis)]

    @cached_property
    def _powers(self) -> list[tuple[int, ...]]:
        p = self.field.p
        rows = []
        for x in self.points:
            row = [1]
            for _ in range(len(self.points) - 1):
                row.append(row[-1] * x % p)
            rows.append(tuple(row))
        return rows

    def evaluate(self, f: Polynomial) -> tuple[int, ...]:
        if len(f.coeffs) > len(self.points):
            return tuple(f(x) for x in self.points)
        p = self.field.p
        cs = f.coeffs
        return tuple(sum(map(int.__mul__, row, cs)) % p for row in self._powers)

    def interpolate(self, values: Sequence[int]) -> Polynomial:
        """Unique polynomial of degree < theta through ``(x_k, values[k])``."""
        if len(values) != len(self.points):
            raise FieldError(f"expected {len(self.points)} values, got {len(values)}")
        p = self.field.p
        out = [sum(map(int.__mul__, values, col)) % p for col in self._columns]
        return Polynomial._raw(out, self.field)


def solve_linear(
    rows: Sequence[Sequence[int]], rhs: Sequence[int], field: PrimeField = FIELD
) -> list[int] | None:
    """One solution of ``rows @ z = rhs`` over the field, or None if inconsistent.

    Free variables are set to zero.
    """
    p = field.p
    n_rows = len(rows)
    n_cols = len(rows[0]) if rows else 0
    m = [[c % p for c in row] + [b % p] for row, b in zip(rows, rhs)]
    pivots: list[int] = []
    r = 0
    for col in range(n_cols):
        piv = next((i for i in range(r, n_rows) if m[i][col]), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = pow(m[r][col], -1, p)
        row_r = [c * inv % p for c in m[r]]
        m[r] = row_r
        for i in range(n_rows):
            if i != r and m[i][col]:
                f = m[i][col]
                m[i] = [(a - f * b) % p for a, b in zip(m[i], row_r)]
        pivots.append(col)
        r += 1
        if r == n_rows:
            break
    if any(m[i][n_cols] for i in range(r, n_rows)):
        return None
    z = [0] * n_cols
    for i, col in enumerate(pivots):
        z[col] = m[i][n_cols]
    return z
