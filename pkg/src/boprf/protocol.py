"""Explicit check (embed-and-map, test, commit), implicit check, and server state.

The party classes are sans-IO: they consume and produce protocol values and
never touch a socket. :func:`run_explicit_check` and :func:`run_implicit_check`
drive both parties in one process; :mod:`boprf.net` drives the same classes
over TCP. Both paths encode every message with :mod:`boprf.wire` so traffic
counts agree.
"""

from __future__ import annotations

import hashlib
import random
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .algebra import FIELD, Polynomial
from .blocklist import Blocklist
from .crypto import PrfKey, PrpKey, f2_eval, prf_eval, share
from .embed import EmbeddingKey, Scheme, embed_to_field
from .metric import MetricParams, ParameterError, eval_domain, recover_gcd
from .mpc import (
    EmServerInput,
    FunctionalityBackend,
    NpaClientInput,
    NpaServerInput,
    TrustedBackend,
    f2_input,
    hash_term,
    hash_term_strong,
)
from . import wire
from .wire import Abort, AbortReason, Flow, Hello, IcKey, MessageType, Params

__all__ = [
    "ProtocolError",
    "KeyReuseError",
    "session_rng",
    "client_hash",
    "ServerState",
    "Keystore",
    "KeystoreError",
    "KeyRegistry",
    "RateLimiter",
    "Traffic",
    "TestOutcome",
    "ExplicitCheckServer",
    "ExplicitCheckClient",
    "ImplicitCheckServer",
    "ImplicitCheckClient",
    "ExplicitResult",
    "ImplicitResult",
    "token",
    "run_explicit_check",
    "run_implicit_check",
]

F = FIELD


class ProtocolError(RuntimeError):
    pass


class KeyReuseError(ProtocolError):
    pass


def session_rng(seed: int | bytes | str | None, *labels: bytes | str) -> random.Random:
    """Deterministic generator for (seed, labels), or the system CSPRNG when seed is None."""
    if seed is None:
        return random.SystemRandom()
    h = hashlib.sha256(b"boprf-rng")
    for part in (seed, *labels):
        if isinstance(part, int):
            part = str(part)
        if isinstance(part, str):
            part = part.encode()
        h.update(struct.pack(">I", len(part)) + part)
    return random.Random(int.from_bytes(h.digest(), "big"))


def client_hash(client_id: bytes) -> bytes:
    return hashlib.sha256(b"boprf-client\x00" + client_id).digest()


def token(w: bytes, k_E: EmbeddingKey, theta: int, f2_key: bytes | None = None) -> tuple[int, ...]:
    """y = v + H(...) computed in the clear, for oracles and tests."""
    v = embed_to_field(k_E, w, eval_domain(k_E.delta, theta))
    if f2_key is None:
        h = hash_term(w, v, k_E, theta)
    else:
        h = hash_term_strong(f2_eval(f2_key, f2_input(w, v, k_E)), theta)
    return F.vadd(v, h)


# persisted state


@dataclass(frozen=True)
class ServerState:
    client_id_hash: bytes
    k_E: EmbeddingKey
    k1: PrfKey
    y: tuple[int, ...]

    def to_record(self) -> bytes:
        body = self.client_id_hash + self.k_E.to_bytes() + self.k1.key + F.vector_to_bytes(self.y)
        body += hashlib.sha256(body).digest()
        return struct.pack(">I", len(body)) + body

    @classmethod
    def from_body(cls, body: bytes) -> "ServerState":
        fixed = 32 + EmbeddingKey.SIZE + 16
        if len(body) < fixed + 32 or (len(body) - fixed - 32) % F.nbytes:
            raise KeystoreError("record has impossible length")
        data, check = body[:-32], body[-32:]
        if hashlib.sha256(data).digest() != check:
            raise KeystoreError("record checksum mismatch")
        cid = data[:32]
        k_E = EmbeddingKey.from_bytes(data[32 : 32 + EmbeddingKey.SIZE])
        k1 = PrfKey(data[32 + EmbeddingKey.SIZE : fixed])
        return cls(cid, k_E, k1, F.vector_from_bytes(data[fixed:]))


class KeystoreError(ValueError):
    pass


class Keystore:
    """Append-log of ServerState records; the latest record per client wins.

    Writes are serialized by a lock; readers see a consistent dict snapshot.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._states: dict[bytes, ServerState] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        data = self.path.read_bytes()
        off = 0
        while off < len(data):
            if off + 4 > len(data):
                raise KeystoreError("truncated record header")
            (n,) = struct.unpack_from(">I", data, off)
            body = data[off + 4 : off + 4 + n]
            if len(body) != n:
                raise KeystoreError("truncated record")
            st = ServerState.from_body(body)
            self._states[st.client_id_hash] = st
            off += 4 + n

    def put(self, state: ServerState) -> None:
        with self._lock:
            if self.path is not None:
                with open(self.path, "ab") as fh:
                    fh.write(state.to_record())
            self._states = {**self._states, state.client_id_hash: state}

    def get(self, client_id: bytes) -> ServerState | None:
        return self._states.get(client_hash(client_id))

    def __contains__(self, client_id: bytes) -> bool:
        return client_hash(client_id) in self._states

    def __len__(self) -> int:
        return len(self._states)


class KeyRegistry:
    """Records every permutation key handed out and refuses repeats."""

    def __init__(self):
        self._seen: set[bytes] = set()
        self._lock = threading.Lock()

    def register(self, *keys: PrpKey) -> None:
        with self._lock:
            for k in keys:
                fp = k.fingerprint()
                if fp in self._seen:
                    raise KeyReuseError("permutation key reused across sessions")
                self._seen.add(fp)

    def __len__(self) -> int:
        return len(self._seen)


class RateLimiter:
    """Per-client failure counter with lockout once ``limit`` is reached."""

    def __init__(self, limit: int | None = 10):
        self.limit = limit
        self._counts: dict[bytes, int] = {}
        self._lock = threading.Lock()

    def allowed(self, client_id: bytes) -> bool:
        return self.limit is None or self._counts.get(client_id, 0) < self.limit

    def failure(self, client_id: bytes) -> None:
        with self._lock:
            self._counts[client_id] = self._counts.get(client_id, 0) + 1

    def success(self, client_id: bytes) -> None:
        with self._lock:
            self._counts.pop(client_id, None)


# explicit check parties


@dataclass(frozen=True)
class TestOutcome:
    blocked: bool
    indices: tuple[int, ...] = ()


class ExplicitCheckServer:
    def __init__(
        self,
        blocklist: Blocklist,
        rng: random.Random,
        *,
        strong: bool = False,
        f2_key: bytes | None = None,
        identity_prp: bool = False,
        local_embed: bool = False,
        fresh_key: bool = True,
        registry: KeyRegistry | None = None,
    ):
        if strong and f2_key is None:
            raise ParameterError("strong mode needs an F2 key")
        if local_embed and (strong or not identity_prp):
            raise ParameterError("local embedding requires identity permutations and plain mode")
        if len(blocklist) == 0:
            raise ParameterError("empty blocklist")
        self.params = params = blocklist.params
        self.strong = strong
        self.local_embed = local_embed
        self.f2_key = f2_key
        delta, theta = params.delta, params.theta
        self.X = X = params.domain()
        self.k_E = EmbeddingKey.random(blocklist.key.scheme, delta, rng) if fresh_key else blocklist.key
        self.L = blocklist.rekey(self.k_E) if fresh_key else blocklist
        self.n = n = len(self.L)
        if identity_prp:
            self.kappa1 = self.kappa2 = PrpKey.identity(theta)
        else:
            self.kappa1 = PrpKey.random(theta, rng)
            self.kappa2 = PrpKey.random(theta, rng)
            if registry is not None:
                registry.register(self.kappa1, self.kappa2)
        self.k1 = PrfKey.random(rng)
        while True:
            self.S = [X.evaluate(Polynomial.random(delta, rng)) for _ in range(n)]
            self.r_c = F.vsum(self.S, theta)
            if all(self.r_c):
                break
        self.alphas = [F.random_vector(theta, rng) for _ in range(n)]
        self.tau = F.random_vector(theta, rng)
        self.outcome: TestOutcome | None = None
        self._c_sum: tuple[int, ...] | None = None

    def session_params(self) -> Params:
        p = self.params
        return Params(p.delta, p.theta, p.T, self.n, int(self.k_E.scheme), self.strong, self.local_embed)

    def em_input(self) -> EmServerInput:
        return EmServerInput(self.k_E, self.kappa1, self.kappa2, self.params.theta, self.f2_key if self.strong else None)

    def npa_inputs(self) -> list[NpaServerInput]:
        a1 = self.kappa1.a
        return [NpaServerInput(S, F.vmul(a1, l)) for S, l in zip(self.S, self.L.vectors)]

    def test(self, outputs: Sequence[Sequence[int]]) -> TestOutcome:
        """Unblind each NPA output and try gcd recovery against the matching list entry."""
        if len(outputs) != self.n:
            raise ProtocolError(f"expected {self.n} NPA outputs, got {len(outputs)}")
        inv_a1 = F.vinv(self.kappa1.a)
        b1 = self.kappa1.b
        polys = self.L.polynomials
        hits = []
        c_hats = []
        for i, (out, S) in enumerate(zip(outputs, self.S)):
            c_hat = F.vmul(F.vsub(out, F.vmul(S, b1)), inv_a1)
            c_hats.append(c_hat)
            if recover_gcd(c_hat, polys[i], self.params, self.X) is not None:
                hits.append(i)
        self._c_sum = F.vsum(c_hats, self.params.theta)
        self.outcome = TestOutcome(bool(hits), tuple(hits))
        return self.outcome

    def commit_inputs(self) -> tuple[list[int], list[int]]:
        if self.outcome is None or self.outcome.blocked:
            raise ProtocolError("commit phase requires a passed test phase")
        us: list[int] = []
        vs: list[int] = []
        for l, alpha in zip(self.L.vectors, self.alphas):
            us.extend(l)
            vs.extend(alpha)
        us.extend(F.vmul(self.r_c, F.vinv(self.kappa2.a)))
        vs.extend(self.tau)
        return us, vs

    def finish(self, beta_prime: Sequence[int], client_id: bytes) -> tuple[int, ServerState]:
        """y = r_c^-1 * (sum c_hat + beta' - beta); returns (gamma, state)."""
        if self._c_sum is None or self.outcome is None or self.outcome.blocked:
            raise ProtocolError("finish called out of order")
        theta = self.params.theta
        if len(beta_prime) != theta:
            raise ProtocolError("malformed beta' length")
        hash_mask = F.vmul(F.vmul(F.vinv(self.kappa2.a), self.r_c), self.kappa2.b)
        beta = F.vadd(F.vadd(F.vsum(self.alphas, theta), self.tau), hash_mask)
        y = F.vmul(F.vinv(self.r_c), F.vadd(self._c_sum, F.vsub(beta_prime, beta)))
        gamma = prf_eval(self.k1, y)
        return gamma, ServerState(client_hash(client_id), self.k_E, self.k1, y)


Tamper = Callable[[tuple[int, ...], tuple[int, ...]], tuple[Sequence[int], Sequence[int]]]


class ExplicitCheckClient:
    """Client side; remembers only w across sessions."""

    def __init__(self, w: bytes, rng: random.Random, mask_rng: random.Random, *, tamper: Tamper | None = None):
        self.w = w
        self.rng = rng
        self.mask_rng = mask_rng
        self.tamper = tamper
        self.params: Params | None = None
        self._p1 = self._p2 = None
        self._T: list[tuple[int, ...]] = []

    def receive_params(self, params: Params) -> None:
        self.metric = MetricParams(params.delta, params.theta, params.T, params.T // 2)
        if params.T % 2:
            raise ParameterError("odd T")
        if params.n < 1:
            raise ParameterError("empty blocklist")
        self.params = params
        self.X = self.metric.domain()

    def receive_em(self, p1: Sequence[int], p2: Sequence[int]) -> None:
        self._p1, self._p2 = tuple(p1), tuple(p2)

    def receive_key(self, key_bytes: bytes) -> None:
        """Local embedding (identity permutations): p1 = v and p2 = H(w, v, k_E)."""
        k_E = EmbeddingKey.from_bytes(key_bytes)
        if k_E.delta != self.params.delta:
            raise ParameterError("embedding key delta does not match session parameters")
        v = embed_to_field(k_E, self.w, self.X)
        self.receive_em(v, hash_term(self.w, v, k_E, self.params.theta))

    def npa_inputs(self) -> list[NpaClientInput]:
        if self._p1 is None:
            raise ProtocolError("embed-and-map output missing")
        p1, p2 = self._p1, self._p2
        if self.tamper is not None:
            p1, p2 = (tuple(x) for x in self.tamper(p1, p2))
        self._p1_used, self._p2_used = p1, p2
        delta, theta = self.params.delta, self.params.theta
        self._T = [self.X.evaluate(Polynomial.random(delta, self.rng)) for _ in range(self.params.n)]
        masks = [F.random_vector(theta, self.mask_rng) for _ in range(self.params.n)]
        return [NpaClientInput(T, p1, m) for T, m in zip(self._T, masks)]

    def ole_inputs(self) -> list[int]:
        xs: list[int] = []
        for T in self._T:
            xs.extend(F.vneg(T))
        xs.extend(self._p2_used)
        return xs

    def commit(self, outputs: Sequence[int]) -> tuple[int, ...]:
        theta, n = self.params.theta, self.params.n
        if len(outputs) != (n + 1) * theta:
            raise ProtocolError("malformed OLE batch")
        chunks = [outputs[i * theta : (i + 1) * theta] for i in range(n + 1)]
        self._T = []
        return F.vsum(chunks, theta)


# implicit check parties


class ImplicitCheckServer:
    def __init__(self, state: ServerState, rng: random.Random, *, f2_key: bytes | None = None):
        self.state = state
        self.f2_key = f2_key
        theta = len(state.y)
        gamma = prf_eval(state.k1, state.y)
        self.sigma = share(gamma, theta, rng)
        self.rho = tuple(F.random_nonzero(rng) for _ in range(theta))

    def key_message(self) -> IcKey:
        return IcKey(len(self.state.y), self.f2_key is not None, self.state.k_E.to_bytes())

    def ole_inputs(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.rho, F.vsub(self.sigma, F.vmul(self.rho, self.state.y))


class ImplicitCheckClient:
    def __init__(self, w: bytes, *, perturb: Callable[[tuple[int, ...]], Sequence[int]] | None = None):
        self.w = w
        self.perturb = perturb
        self._y_hat: tuple[int, ...] | None = None
        self.f2_request: bytes | None = None

    def receive_key(self, msg: IcKey) -> bytes | None:
        """Returns the F2 input when the server runs in strong mode, else None."""
        k_E = EmbeddingKey.from_bytes(msg.key)
        self.theta = msg.theta
        if not k_E.delta < msg.theta <= 2 * k_E.delta + 1:
            raise ParameterError("implicit-check theta outside (delta, 2*delta+1]")
        self.k_E = k_E
        self.v = embed_to_field(k_E, self.w, eval_domain(k_E.delta, msg.theta))
        if msg.strong:
            self.f2_request = f2_input(self.w, self.v, k_E)
            return self.f2_request
        self._set_y(hash_term(self.w, self.v, k_E, msg.theta))
        return None

    def receive_f2(self, out: bytes) -> None:
        self._set_y(hash_term_strong(out, self.theta))

    def _set_y(self, h: tuple[int, ...]) -> None:
        y = F.vadd(self.v, h)
        self._y_hat = tuple(self.perturb(y)) if self.perturb is not None else y

    def ole_inputs(self) -> tuple[int, ...]:
        if self._y_hat is None:
            raise ProtocolError("token not computed")
        return self._y_hat

    def finish(self, outputs: Sequence[int]) -> int:
        if len(outputs) != self.theta:
            raise ProtocolError("malformed implicit-check OLE batch")
        return sum(outputs) % F.p


# in-process orchestration


@dataclass
class Traffic:
    """Frame bytes as seen by the client."""

    sent: int = 0
    received: int = 0
    frames: int = 0

    def up(self, payload: bytes) -> bytes:
        self.sent += wire.HEADER.size + len(payload)
        self.frames += 1
        return payload

    def down(self, payload: bytes) -> bytes:
        self.received += wire.HEADER.size + len(payload)
        self.frames += 1
        return payload

    @property
    def total(self) -> int:
        return self.sent + self.received


@dataclass
class ExplicitResult:
    gamma: int | None
    blocked: bool
    abort: Abort | None = None
    indices: tuple[int, ...] = ()
    state: ServerState | None = None
    traffic: Traffic = field(default_factory=Traffic)
    timings: dict = field(default_factory=dict)
    session_id: bytes = b""

    @property
    def ok(self) -> bool:
        return self.gamma is not None


@dataclass
class ImplicitResult:
    gamma: int | None
    abort: Abort | None = None
    traffic: Traffic = field(default_factory=Traffic)
    timings: dict = field(default_factory=dict)
    session_id: bytes = b""


def client_session_id(seed) -> bytes:
    return session_rng(seed, "session-id").randbytes(16)


def run_explicit_check(
    w: bytes,
    blocklist: Blocklist,
    *,
    client_id: bytes = b"client",
    seed=None,
    backend: FunctionalityBackend | None = None,
    store: Keystore | None = None,
    strong: bool = False,
    f2_key: bytes | None = None,
    mac_mode: bool = False,
    fresh_key: bool = True,
    tamper: Tamper | None = None,
    registry: KeyRegistry | None = None,
    rate_limiter: RateLimiter | None = None,
) -> ExplicitResult:
    """Both parties of one explicit check in this process."""
    backend = backend or TrustedBackend()
    tr = Traffic()
    timings: dict[str, float] = {}
    sid = client_session_id(seed)
    t0 = time.perf_counter()

    tr.up(Hello(Flow.MAC_ISSUE if mac_mode else Flow.EXPLICIT, client_id).encode())
    if rate_limiter is not None and not rate_limiter.allowed(client_id):
        ab = Abort(AbortReason.RATE_LIMITED, "too many attempts")
        tr.down(ab.encode())
        return ExplicitResult(None, False, ab, traffic=tr, session_id=sid)

    server = ExplicitCheckServer(
        blocklist,
        session_rng(seed, "server", sid),
        strong=strong,
        f2_key=f2_key,
        identity_prp=mac_mode,
        local_embed=mac_mode,
        fresh_key=fresh_key,
        registry=registry,
    )
    client = ExplicitCheckClient(w, session_rng(seed, "client"), session_rng(seed, "client-mask"), tamper=tamper)
    client.receive_params(Params.decode(tr.down(server.session_params().encode())))
    theta = client.params.theta

    if mac_mode:
        client.receive_key(tr.down(server.k_E.to_bytes()))
    else:
        tr.up(w)
        p1, p2 = backend.embed_and_map(w, server.em_input())
        tr.down(wire.enc_vec(p1) + wire.enc_vec(p2))
        client.receive_em(p1, p2)
    timings["embed"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    c_in = client.npa_inputs()
    tr.up(wire.enc_npa(c_in[0].a, [c.r1 for c in c_in], [c.masks for c in c_in]))
    xs = client.ole_inputs()
    tr.up(wire.enc_vecs([xs[i : i + theta] for i in range(0, len(xs), theta)]))
    outcome = server.test(backend.npa(c_in, server.npa_inputs()))
    timings["test"] = time.perf_counter() - t1
    if outcome.blocked:
        ab = Abort(AbortReason.BLOCKED, "input is too close to the blocklist")
        tr.down(ab.encode())
        if rate_limiter is not None:
            rate_limiter.failure(client_id)
        return ExplicitResult(None, True, ab, outcome.indices, traffic=tr, timings=timings, session_id=sid)

    t2 = time.perf_counter()
    us, vs = server.commit_inputs()
    outs = backend.ole(xs, us, vs)
    tr.down(wire.enc_vecs([outs[i : i + theta] for i in range(0, len(outs), theta)]))
    beta_prime = client.commit(outs)
    tr.up(wire.enc_vec(beta_prime))
    gamma, state = server.finish(beta_prime, client_id)
    if store is not None:
        store.put(state)
    if rate_limiter is not None:
        rate_limiter.success(client_id)
    tr.down(wire.enc_elem(gamma))
    timings["commit"] = time.perf_counter() - t2
    return ExplicitResult(gamma, False, None, (), state, tr, timings, sid)


def run_implicit_check(
    w: bytes,
    store: Keystore,
    *,
    client_id: bytes = b"client",
    seed=None,
    backend: FunctionalityBackend | None = None,
    f2_key: bytes | None = None,
    perturb: Callable[[tuple[int, ...]], Sequence[int]] | None = None,
    mac_mode: bool = False,
) -> ImplicitResult:
    """Both parties of one implicit check in this process."""
    backend = backend or TrustedBackend()
    tr = Traffic()
    sid = client_session_id(seed)
    t0 = time.perf_counter()
    tr.up(Hello(Flow.MAC_VERIFY if mac_mode else Flow.IMPLICIT, client_id).encode())
    state = store.get(client_id)
    if state is None:
        ab = Abort(AbortReason.UNKNOWN_CLIENT, "no state for client")
        tr.down(ab.encode())
        return ImplicitResult(None, ab, tr, session_id=sid)
    server = ImplicitCheckServer(state, session_rng(seed, "server", sid), f2_key=None if mac_mode else f2_key)
    client = ImplicitCheckClient(w, perturb=perturb)
    req = client.receive_key(IcKey.decode(tr.down(server.key_message().encode())))
    if req is not None:
        tr.up(req)
        client.receive_f2(tr.down(backend.oprf2(req, server.f2_key)))
    y_hat = client.ole_inputs()
    tr.up(wire.enc_vec(y_hat))
    us, vs = server.ole_inputs()
    outs = backend.ole(y_hat, us, vs)
    tr.down(wire.enc_vec(outs))
    gamma = client.finish(outs)
    return ImplicitResult(gamma, None, tr, {"implicit": time.perf_counter() - t0}, sid)
