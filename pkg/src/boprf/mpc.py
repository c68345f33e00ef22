"""Two-party functionalities: OLE, noisy polynomial addition, F2-OPRF, embed-and-map.

Two backends compute them. :class:`TrustedBackend` evaluates each
functionality directly from both parties' inputs. :class:`DealerBackend`
realizes NPA from pairs of reversed OLEs, which is what the networked dealer
runs. Neither is a secure realization; they exist to validate protocol logic.
"""

from __future__ import annotations

import hashlib
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

from .algebra import FIELD, PrimeField
from .crypto import PrpKey, f2_eval, hash_to_vector
from .embed import EmbeddingKey, embed_to_field
from .metric import eval_domain

__all__ = [
    "SessionMismatch",
    "OleClientInput",
    "OleServerInput",
    "ole_eval",
    "ole_eval_reversed",
    "NpaClientInput",
    "NpaServerInput",
    "npa_direct",
    "npa_via_ole",
    "EmServerInput",
    "f2_input",
    "hash_term",
    "hash_term_strong",
    "embed_and_map",
    "FunctionalityBackend",
    "TrustedBackend",
    "DealerBackend",
]


class SessionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class OleClientInput:
    x: int
    session_id: bytes = b""


@dataclass(frozen=True)
class OleServerInput:
    u: int
    v: int
    session_id: bytes = b""


def _same_session(a: bytes, b: bytes) -> None:
    if a != b:
        raise SessionMismatch("OLE inputs bound to different sessions")


def ole_eval(client: OleClientInput, server: OleServerInput, field: PrimeField = FIELD) -> int:
    """Client learns u*x + v."""
    _same_session(client.session_id, server.session_id)
    return (server.u * client.x + server.v) % field.p


def ole_eval_reversed(receiver: OleClientInput, sender: OleServerInput, field: PrimeField = FIELD) -> int:
    """Same relation with the server as receiver and the client as sender."""
    _same_session(receiver.session_id, sender.session_id)
    return (sender.u * receiver.x + sender.v) % field.p


def _ole_batch(xs: Sequence[int], us: Sequence[int], vs: Sequence[int], p: int) -> tuple[int, ...]:
    if not len(xs) == len(us) == len(vs):
        raise ValueError("OLE batch length mismatch")
    return tuple((u * x + v) % p for x, u, v in zip(xs, us, vs))


@dataclass(frozen=True)
class NpaClientInput:
    r1: tuple[int, ...]
    a: tuple[int, ...]
    masks: tuple[int, ...]


@dataclass(frozen=True)
class NpaServerInput:
    r2: tuple[int, ...]
    b: tuple[int, ...]


def _npa_check(c: NpaClientInput, s: NpaServerInput) -> None:
    n = len(c.r1)
    if not (len(c.a) == len(c.masks) == len(s.r2) == len(s.b) == n):
        raise ValueError("NPA vector length mismatch")


def npa_direct(c: NpaClientInput, s: NpaServerInput, field: PrimeField = FIELD) -> tuple[int, ...]:
    """Server learns r2*a + r1*b."""
    _npa_check(c, s)
    p = field.p
    return tuple((r2 * a + r1 * b) % p for r1, a, r2, b in zip(c.r1, c.a, s.r2, s.b))


def npa_via_ole(c: NpaClientInput, s: NpaServerInput, field: PrimeField = FIELD) -> tuple[int, ...]:
    """NPA from two reversed OLEs per component, masked by the client's m_k."""
    _npa_check(c, s)
    p = field.p
    first = _ole_batch(s.r2, c.a, c.masks, p)
    second = _ole_batch(s.b, c.r1, [-m % p for m in c.masks], p)
    return tuple((x + y) % p for x, y in zip(first, second))


@dataclass(frozen=True)
class EmServerInput:
    k_E: EmbeddingKey
    kappa1: PrpKey
    kappa2: PrpKey
    theta: int
    f2_key: bytes | None = None


def _lp(*parts: bytes) -> bytes:
    return b"".join(struct.pack(">I", len(x)) + x for x in parts)


def f2_input(w: bytes, v: Sequence[int], k_E: EmbeddingKey, field: PrimeField = FIELD) -> bytes:
    """Hash-serialized (w, v, k_E) tuple fed to F2."""
    return hashlib.sha256(_lp(b"f2-in", w, field.vector_to_bytes(v), k_E.to_bytes())).digest()


def hash_term(
    w: bytes, v: Sequence[int], k_E: EmbeddingKey, theta: int, field: PrimeField = FIELD
) -> tuple[int, ...]:
    """H(w, v, k_E) in F^theta."""
    return hash_to_vector(b"boprf-token", [w, field.vector_to_bytes(v), k_E.to_bytes()], theta, field)


def hash_term_strong(f2_out: bytes, theta: int, field: PrimeField = FIELD) -> tuple[int, ...]:
    """H(F2_k2(w, v, k_E)) in F^theta."""
    return hash_to_vector(b"boprf-token-strong", [f2_out], theta, field)


def embed_and_map(
    w: bytes, server: EmServerInput, field: PrimeField = FIELD
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Ideal F_EM: the client receives (kappa1(v), kappa2(h)) and nothing else."""
    X = eval_domain(server.k_E.delta, server.theta, field)
    v = embed_to_field(server.k_E, w, X)
    if server.f2_key is None:
        h = hash_term(w, v, server.k_E, server.theta, field)
    else:
        h = hash_term_strong(f2_eval(server.f2_key, f2_input(w, v, server.k_E, field)), server.theta, field)
    return server.kappa1.apply(v), server.kappa2.apply(h)


class FunctionalityBackend(ABC):
    kind: str

    def __init__(self, field: PrimeField = FIELD):
        self.field = field

    def embed_and_map(self, w: bytes, server: EmServerInput):
        return embed_and_map(w, server, self.field)

    @abstractmethod
    def npa(self, client: Sequence[NpaClientInput], server: Sequence[NpaServerInput]) -> list[tuple[int, ...]]:
        """Batch of NPAs; outputs go to the server."""

    def ole(self, xs: Sequence[int], us: Sequence[int], vs: Sequence[int]) -> tuple[int, ...]:
        """Batch of OLEs; outputs go to the client."""
        return _ole_batch(xs, us, vs, self.field.p)

    def oprf2(self, data: bytes, key: bytes) -> bytes:
        return f2_eval(key, data)


class TrustedBackend(FunctionalityBackend):
    kind = "trusted-local"

    def npa(self, client, server):
        if len(client) != len(server):
            raise ValueError("NPA batch length mismatch")
        return [npa_direct(c, s, self.field) for c, s in zip(client, server)]


class DealerBackend(FunctionalityBackend):
    """Reference dealer: NPA through masked reversed OLEs. Not secure for deployment."""

    kind = "dealer-network"

    def npa(self, client, server):
        if len(client) != len(server):
            raise ValueError("NPA batch length mismatch")
        return [npa_via_ole(c, s, self.field) for c, s in zip(client, server)]
