"""TCP transport: a threaded server hosting the reference dealer, and client flows.

No TLS and no transport authentication. The dealer sees both parties'
functionality inputs; this transport validates protocol logic and measures
traffic, and must not be deployed as-is.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import wire
from .apake import AkeClient, AkeServer, AppStore, AuthError, make_record, open_credentials
from .blocklist import Blocklist
from .crypto import EnvelopeAuthError
from .metric import ParameterError
from .mpc import DealerBackend, NpaClientInput
from .protocol import (
    ExplicitCheckClient,
    ExplicitCheckServer,
    ExplicitResult,
    ImplicitCheckClient,
    ImplicitCheckServer,
    ImplicitResult,
    KeyRegistry,
    Keystore,
    ProtocolError,
    RateLimiter,
    Tamper,
    Traffic,
    client_session_id,
    session_rng,
)
from .wire import Abort, AbortReason, Flow, Frame, FrameError, Hello, IcKey, MacPackage, MessageType, Params

__all__ = [
    "ServerConfig",
    "BoprfServer",
    "RemoteAbort",
    "LoginResult",
    "explicit_check",
    "implicit_check",
    "apake_register",
    "apake_login",
    "mac_issue",
    "mac_verify",
]

log = logging.getLogger(__name__)
M = MessageType


class RemoteAbort(Exception):
    def __init__(self, abort: Abort):
        super().__init__(f"{abort.reason.name}: {abort.message}")
        self.abort = abort


@dataclass
class ServerConfig:
    blocklist: Blocklist
    keystore: Keystore = field(default_factory=Keystore)
    appstore: AppStore = field(default_factory=AppStore)
    seed: int | None = None
    strong: bool = True
    f2_key: bytes | None = None
    fresh_key: bool = True
    rate_limit: int | None = 10
    registry: KeyRegistry | None = field(default_factory=KeyRegistry)

    def __post_init__(self):
        if self.f2_key is None:
            self.f2_key = session_rng(self.seed, "f2-key").randbytes(16)


class _Channel:
    """Frame I/O on one socket with byte counters (sent = this side's output)."""

    def __init__(self, sock: socket.socket, session_id: bytes = b"\x00" * 16):
        self.sock = sock
        self.rfile = sock.makefile("rb")
        self.sid = session_id
        self.sent = 0
        self.received = 0
        self.frames = 0

    def send(self, mtype: MessageType, payload: bytes = b"") -> None:
        data = wire.encode_frame(Frame(mtype, self.sid, payload))
        self.sock.sendall(data)
        self.sent += len(data)
        self.frames += 1

    def recv(self, *expected: MessageType) -> bytes:
        f = wire.read_frame(self.rfile)
        self.received += wire.HEADER.size + len(f.payload)
        self.frames += 1
        if f.session_id != self.sid:
            raise ProtocolError("session id changed mid-session")
        if f.msg_type == M.ABORT and M.ABORT not in expected:
            raise RemoteAbort(Abort.decode(f.payload))
        if expected and f.msg_type not in expected:
            raise _OutOfOrder(f"expected {'/'.join(e.name for e in expected)}, got {f.msg_type.name}")
        return f.payload

    def abort(self, reason: AbortReason, message: str = "") -> None:
        try:
            self.send(M.ABORT, Abort(reason, message).encode())
        except OSError:
            pass

    def close(self) -> None:
        try:
            self.rfile.close()
        finally:
            self.sock.close()


class _OutOfOrder(ProtocolError):
    pass


# server


class _Handler(socketserver.BaseRequestHandler):
    server: "_TCPServer"

    def handle(self) -> None:
        cfg = self.server.cfg
        ch = _Channel(self.request)
        try:
            first = wire.read_frame(ch.rfile)
            ch.sid = first.session_id
            if first.msg_type != M.HELLO:
                ch.abort(AbortReason.PROTOCOL, "session must start with HELLO")
                return
            hello = Hello.decode(first.payload)
            rng = session_rng(cfg.seed, "server", ch.sid)
            if hello.flow in (Flow.EXPLICIT, Flow.APAKE_REGISTER, Flow.MAC_ISSUE):
                self._explicit(ch, hello, rng)
            else:
                self._implicit(ch, hello, rng)
        except (_OutOfOrder, FrameError, ProtocolError, ParameterError, AuthError, ValueError) as e:
            log.info("session %s aborted: %s", ch.sid.hex(), e)
            ch.abort(AbortReason.PROTOCOL, str(e))
        except OSError as e:
            log.info("session %s connection error: %s", ch.sid.hex(), e)
        finally:
            ch.close()

    def _explicit(self, ch: _Channel, hello: Hello, rng) -> None:
        cfg = self.server.cfg
        dealer = self.server.dealer
        cid = hello.client_id
        if not self.server.limiter.allowed(cid):
            ch.abort(AbortReason.RATE_LIMITED, "too many attempts")
            return
        mac = hello.flow == Flow.MAC_ISSUE
        strong = cfg.strong and not mac
        srv = ExplicitCheckServer(
            cfg.blocklist,
            rng,
            strong=strong,
            f2_key=cfg.f2_key,
            identity_prp=mac,
            local_embed=mac,
            fresh_key=cfg.fresh_key,
            registry=None if mac else cfg.registry,
        )
        theta = srv.params.theta
        ch.send(M.PARAMS, srv.session_params().encode())
        if mac:
            ch.send(M.EM_KEY, srv.k_E.to_bytes())
        else:
            w = ch.recv(M.EM_REQ)
            p1, p2 = dealer.call("embed_and_map", w, srv.em_input())
            ch.send(M.EM_RESP, wire.enc_vec(p1) + wire.enc_vec(p2))
        a, r1s, masks = wire.dec_npa(ch.recv(M.NPA_BATCH), theta)
        if len(r1s) != srv.n:
            raise ProtocolError("NPA batch size does not match the blocklist")
        c_in = [NpaClientInput(r1, a, m) for r1, m in zip(r1s, masks)]
        xs = [x for v in wire.dec_vecs(ch.recv(M.OLE_BATCH_REQ), theta) for x in v]
        outcome = srv.test(dealer.call("npa", c_in, srv.npa_inputs()))
        if outcome.blocked:
            self.server.limiter.failure(cid)
            log.info("session %s blocked (matches %s)", ch.sid.hex(), list(outcome.indices))
            ch.abort(AbortReason.BLOCKED, "input is too close to the blocklist")
            return
        us, vs = srv.commit_inputs()
        if len(xs) != len(us):
            raise ProtocolError("OLE batch size mismatch")
        outs = dealer.call("ole", xs, us, vs)
        ch.send(M.OLE_BATCH_RESP, wire.enc_vecs([outs[i : i + theta] for i in range(0, len(outs), theta)]))
        beta_prime = wire.dec_vec(ch.recv(M.COMMIT_BETA), theta)
        gamma, state = srv.finish(beta_prime, cid)
        cfg.keystore.put(state)
        if hello.flow == Flow.APAKE_REGISTER:
            cfg.appstore.put(make_record(cid, gamma, rng))
        self.server.limiter.success(cid)
        ch.send(M.RESULT_GAMMA, wire.enc_elem(gamma))

    def _implicit(self, ch: _Channel, hello: Hello, rng) -> None:
        cfg = self.server.cfg
        dealer = self.server.dealer
        cid = hello.client_id
        login = hello.flow == Flow.APAKE_LOGIN
        if login and not self.server.limiter.allowed(cid):
            ch.abort(AbortReason.RATE_LIMITED, "too many attempts")
            return
        state = cfg.keystore.get(cid)
        record = cfg.appstore.get(cid) if login else None
        if state is None or (login and record is None):
            ch.abort(AbortReason.UNKNOWN_CLIENT, "no state for client")
            return
        strong = cfg.strong and hello.flow != Flow.MAC_VERIFY
        srv = ImplicitCheckServer(state, rng, f2_key=cfg.f2_key if strong else None)
        ch.send(M.IC_KEY, srv.key_message().encode())
        payload = ch.recv(M.OPRF2_REQ, M.IC_OLE_REQ) if strong else ch.recv(M.IC_OLE_REQ)
        if strong:
            if len(payload) > 1024:
                raise ProtocolError("oversized OPRF2 request")
            ch.send(M.OPRF2_RESP, dealer.call("oprf2", payload, cfg.f2_key))
            payload = ch.recv(M.IC_OLE_REQ)
        y_hat = wire.dec_vec(payload, len(state.y))
        us, vs = srv.ole_inputs()
        ch.send(M.IC_OLE_RESP, wire.enc_vec(dealer.call("ole", y_hat, us, vs)))
        if not login:
            return
        ch.send(M.APAKE_ENVELOPE, record.envelope)
        try:
            init = ch.recv(M.AKE_INIT)
        except RemoteAbort:
            self.server.limiter.failure(cid)
            return
        ake = AkeServer(record, rng)
        ch.send(M.AKE_RESP, ake.respond(init))
        try:
            ake.finish(ch.recv(M.AKE_FINISH))
        except (AuthError, RemoteAbort):
            self.server.limiter.failure(cid)
            ch.abort(AbortReason.AUTH, "key confirmation failed")
            return
        self.server.limiter.success(cid)
        self.server.sessions[ake.ssid] = ake.session_key
        ch.send(M.ACK)


class _Dealer:
    """Single-threaded dealer task; every functionality call is queued to it."""

    def __init__(self):
        self.backend = DealerBackend()
        self.pool = ThreadPoolExecutor(max_workers=1, thread_name_prefix="dealer")

    def call(self, name: str, *args):
        return self.pool.submit(getattr(self.backend, name), *args).result()

    def close(self) -> None:
        self.pool.shutdown(wait=False)


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, cfg: ServerConfig):
        super().__init__(addr, _Handler)
        self.cfg = cfg
        self.dealer = _Dealer()
        self.limiter = RateLimiter(cfg.rate_limit)
        self.sessions: dict[bytes, bytes] = {}


class BoprfServer:
    """Threaded B-OPRF server; use as a context manager for background serving."""

    def __init__(self, config: ServerConfig, host: str = "127.0.0.1", port: int = 0):
        self._srv = _TCPServer((host, port), config)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._srv.server_address[:2]

    @property
    def config(self) -> ServerConfig:
        return self._srv.cfg

    @property
    def sessions(self) -> dict[bytes, bytes]:
        """Session keys of completed logins, by ssid."""
        return self._srv.sessions

    def serve_forever(self) -> None:
        self._srv.serve_forever()

    def start(self) -> "BoprfServer":
        self._thread = threading.Thread(target=self._srv.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._srv.shutdown()
        self._srv.server_close()
        self._srv.dealer.close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "BoprfServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


# client flows


def _connect(address, seed, timeout: float) -> _Channel:
    sock = socket.create_connection(tuple(address), timeout=timeout)
    return _Channel(sock, client_session_id(seed))


def _traffic(ch: _Channel) -> Traffic:
    return Traffic(ch.sent, ch.received, ch.frames)


def _explicit_flow(ch: _Channel, flow: Flow, w: bytes, client_id: bytes, seed, tamper) -> ExplicitResult:
    t0 = time.perf_counter()
    timings = {}
    ch.send(M.HELLO, Hello(flow, client_id).encode())
    params = Params.decode(ch.recv(M.PARAMS))
    client = ExplicitCheckClient(w, session_rng(seed, "client"), session_rng(seed, "client-mask"), tamper=tamper)
    client.receive_params(params)
    theta = params.theta
    if params.local_embed:
        client.receive_key(ch.recv(M.EM_KEY))
    else:
        ch.send(M.EM_REQ, w)
        em = ch.recv(M.EM_RESP)
        width = theta * 16
        client.receive_em(wire.dec_vec(em[:width], theta), wire.dec_vec(em[width:], theta))
    timings["embed"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    c_in = client.npa_inputs()
    ch.send(M.NPA_BATCH, wire.enc_npa(c_in[0].a, [c.r1 for c in c_in], [c.masks for c in c_in]))
    xs = client.ole_inputs()
    ch.send(M.OLE_BATCH_REQ, wire.enc_vecs([xs[i : i + theta] for i in range(0, len(xs), theta)]))
    try:
        resp = ch.recv(M.OLE_BATCH_RESP)
    except RemoteAbort as e:
        timings["test"] = time.perf_counter() - t1
        blocked = e.abort.reason == AbortReason.BLOCKED
        if not blocked:
            raise
        return ExplicitResult(None, True, e.abort, traffic=_traffic(ch), timings=timings, session_id=ch.sid)
    timings["test"] = time.perf_counter() - t1
    t2 = time.perf_counter()
    outs = [x for v in wire.dec_vecs(resp, theta) for x in v]
    ch.send(M.COMMIT_BETA, wire.enc_vec(client.commit(outs)))
    gamma = wire.dec_elem(ch.recv(M.RESULT_GAMMA))
    timings["commit"] = time.perf_counter() - t2
    return ExplicitResult(gamma, False, traffic=_traffic(ch), timings=timings, session_id=ch.sid)


def explicit_check(
    address,
    w: bytes,
    *,
    client_id: bytes = b"client",
    seed=None,
    tamper: Tamper | None = None,
    flow: Flow = Flow.EXPLICIT,
    timeout: float = 300.0,
) -> ExplicitResult:
    ch = _connect(address, seed, timeout)
    try:
        return _explicit_flow(ch, flow, w, client_id, seed, tamper)
    finally:
        ch.close()


def _implicit_flow(ch: _Channel, flow: Flow, w: bytes, client_id: bytes, perturb) -> int:
    ch.send(M.HELLO, Hello(flow, client_id).encode())
    client = ImplicitCheckClient(w, perturb=perturb)
    req = client.receive_key(IcKey.decode(ch.recv(M.IC_KEY)))
    if req is not None:
        ch.send(M.OPRF2_REQ, req)
        client.receive_f2(ch.recv(M.OPRF2_RESP))
    y_hat = client.ole_inputs()
    ch.send(M.IC_OLE_REQ, wire.enc_vec(y_hat))
    return client.finish(wire.dec_vec(ch.recv(M.IC_OLE_RESP), client.theta))


def implicit_check(
    address,
    w: bytes,
    *,
    client_id: bytes = b"client",
    seed=None,
    perturb: Callable[[tuple[int, ...]], Sequence[int]] | None = None,
    flow: Flow = Flow.IMPLICIT,
    timeout: float = 300.0,
) -> ImplicitResult:
    ch = _connect(address, seed, timeout)
    t0 = time.perf_counter()
    try:
        try:
            gamma = _implicit_flow(ch, flow, w, client_id, perturb)
        except RemoteAbort as e:
            return ImplicitResult(None, e.abort, _traffic(ch), session_id=ch.sid)
        return ImplicitResult(gamma, None, _traffic(ch), {"implicit": time.perf_counter() - t0}, ch.sid)
    finally:
        ch.close()


def apake_register(address, password: bytes, username: bytes, *, seed=None, timeout: float = 300.0) -> ExplicitResult:
    """Registration; the client keeps nothing but the password."""
    return explicit_check(address, password, client_id=username, seed=seed, flow=Flow.APAKE_REGISTER, timeout=timeout)


@dataclass
class LoginResult:
    session_key: bytes
    ssid: bytes
    traffic: Traffic


def apake_login(address, password: bytes, username: bytes, *, seed=None, timeout: float = 300.0) -> LoginResult:
    """Login; raises AuthError on a wrong password and RemoteAbort on server refusal."""
    ch = _connect(address, seed, timeout)
    try:
        rw = _implicit_flow(ch, Flow.APAKE_LOGIN, password, username, None)
        env = ch.recv(M.APAKE_ENVELOPE)
        try:
            p_u, P_u, P_s = open_credentials(rw, env)
        except EnvelopeAuthError:
            ch.abort(AbortReason.AUTH, "envelope did not open")
            raise AuthError("wrong password") from None
        ake = AkeClient(p_u, P_u, P_s, session_rng(seed, "ake"))
        ch.send(M.AKE_INIT, ake.init_message())
        ch.send(M.AKE_FINISH, ake.finish_message(ch.recv(M.AKE_RESP)))
        ch.recv(M.ACK)
        return LoginResult(ake.session_key, ake.ssid, _traffic(ch))
    finally:
        ch.close()


def mac_issue(address, data: bytes, record_id: bytes, *, seed=None, timeout: float = 300.0) -> MacPackage | None:
    """Tag ``data`` with the policy server; None if the file is blocklisted."""
    res = explicit_check(address, data, client_id=record_id, seed=seed, flow=Flow.MAC_ISSUE, timeout=timeout)
    if res.blocked:
        return None
    return MacPackage(record_id, wire.enc_elem(res.gamma), data)


def mac_verify(address, package: MacPackage, *, seed=None, timeout: float = 300.0) -> bool:
    res = implicit_check(address, package.data, client_id=package.record_id, seed=seed, flow=Flow.MAC_VERIFY, timeout=timeout)
    return res.gamma is not None and wire.enc_elem(res.gamma) == package.tag
