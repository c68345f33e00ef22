"""aPAKE application: credential envelope and a minimal key-confirmation AKE.

The B-OPRF output gamma serves as ``rw``. At registration the server seals
the client's key pair and its own public key under rw. At login the client
recovers rw through the implicit check, opens the envelope, and both sides
run a three-message X25519 handshake with mutual HMAC confirmation.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import random
import threading
from dataclasses import dataclass
from pathlib import Path

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .algebra import FIELD
from .crypto import envelope_open, envelope_seal
from .protocol import client_hash

__all__ = [
    "AuthError",
    "ApakeRecord",
    "AppStore",
    "make_record",
    "open_credentials",
    "AkeClient",
    "AkeServer",
]


class AuthError(Exception):
    pass


def _pub(priv: X25519PrivateKey) -> bytes:
    return priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def _priv(rng: random.Random) -> X25519PrivateKey:
    return X25519PrivateKey.from_private_bytes(rng.randbytes(32))


def rw_bytes(gamma: int) -> bytes:
    return FIELD.to_bytes(gamma)


@dataclass(frozen=True)
class ApakeRecord:
    client_id_hash: bytes
    envelope: bytes
    client_pub: bytes
    server_priv: bytes
    server_pub: bytes

    def to_json(self) -> str:
        return json.dumps({k: v.hex() for k, v in self.__dict__.items()})

    @classmethod
    def from_json(cls, line: str) -> "ApakeRecord":
        return cls(**{k: bytes.fromhex(v) for k, v in json.loads(line).items()})


def make_record(client_id: bytes, gamma: int, rng: random.Random) -> ApakeRecord:
    """Fresh client and server key pairs; the client's half sealed under rw."""
    p_u = rng.randbytes(32)
    p_s = rng.randbytes(32)
    P_u = _pub(X25519PrivateKey.from_private_bytes(p_u))
    P_s = _pub(X25519PrivateKey.from_private_bytes(p_s))
    env = envelope_seal(rw_bytes(gamma), p_u + P_u + P_s, nonce=rng.randbytes(12))
    return ApakeRecord(client_hash(client_id), env, P_u, p_s, P_s)


def open_credentials(gamma: int, envelope: bytes) -> tuple[bytes, bytes, bytes]:
    """(p_u, P_u, P_s); raises EnvelopeAuthError when gamma is not the registered rw."""
    payload = envelope_open(rw_bytes(gamma), envelope)
    if len(payload) != 96:
        raise AuthError("envelope payload has wrong size")
    return payload[:32], payload[32:64], payload[64:]


class AppStore:
    """JSON-lines sidecar with one aPAKE record per client (last one wins)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._records: dict[bytes, ApakeRecord] = {}
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    rec = ApakeRecord.from_json(line)
                    self._records[rec.client_id_hash] = rec

    def put(self, rec: ApakeRecord) -> None:
        with self._lock:
            if self.path is not None:
                with open(self.path, "a") as fh:
                    fh.write(rec.to_json() + "\n")
            self._records = {**self._records, rec.client_id_hash: rec}

    def get(self, client_id: bytes) -> ApakeRecord | None:
        return self._records.get(client_hash(client_id))


def _derive(ikm: bytes, th: bytes) -> tuple[bytes, bytes, bytes]:
    okm = HKDF(hashes.SHA256(), 96, salt=th, info=b"boprf ake v1").derive(ikm)
    return okm[:32], okm[32:64], okm[64:]


def _mac(key: bytes, *parts: bytes) -> bytes:
    return hmac.new(key, b"".join(parts), hashlib.sha256).digest()


class _Handshake:
    session_key: bytes | None = None
    ssid: bytes | None = None

    def _transcript(self, P_u, P_s, n_c, E_c, n_s, E_s) -> bytes:
        return hashlib.sha256(b"boprf-ake\x00" + P_u + P_s + n_c + E_c + n_s + E_s).digest()


class AkeClient(_Handshake):
    def __init__(self, p_u: bytes, P_u: bytes, P_s: bytes, rng: random.Random):
        self.p_u = X25519PrivateKey.from_private_bytes(p_u)
        self.P_u, self.P_s = P_u, P_s
        self.e = _priv(rng)
        self.nonce = rng.randbytes(32)

    def init_message(self) -> bytes:
        return self.nonce + _pub(self.e)

    def finish_message(self, resp: bytes) -> bytes:
        if len(resp) != 96:
            raise AuthError("malformed AKE response")
        n_s, E_s, mac_s = resp[:32], resp[32:64], resp[64:]
        E_s_key = X25519PublicKey.from_public_bytes(E_s)
        ikm = (
            self.e.exchange(E_s_key)
            + self.e.exchange(X25519PublicKey.from_public_bytes(self.P_s))
            + self.p_u.exchange(E_s_key)
        )
        th = self._transcript(self.P_u, self.P_s, self.nonce, _pub(self.e), n_s, E_s)
        km_s, km_c, sk = _derive(ikm, th)
        if not hmac.compare_digest(mac_s, _mac(km_s, th, b"server")):
            raise AuthError("server key confirmation failed")
        mac_c = _mac(km_c, th, mac_s, b"client")
        self.session_key = sk
        self.ssid = hashlib.sha256(b"ssid" + th).digest()
        return mac_c


class AkeServer(_Handshake):
    def __init__(self, record: ApakeRecord, rng: random.Random):
        self.p_s = X25519PrivateKey.from_private_bytes(record.server_priv)
        self.P_u, self.P_s = record.client_pub, record.server_pub
        self.e = _priv(rng)
        self.nonce = rng.randbytes(32)
        self._pending: tuple[bytes, ...] | None = None

    def respond(self, init: bytes) -> bytes:
        if len(init) != 64:
            raise AuthError("malformed AKE init")
        n_c, E_c = init[:32], init[32:]
        E_c_key = X25519PublicKey.from_public_bytes(E_c)
        ikm = (
            self.e.exchange(E_c_key)
            + self.p_s.exchange(E_c_key)
            + self.e.exchange(X25519PublicKey.from_public_bytes(self.P_u))
        )
        th = self._transcript(self.P_u, self.P_s, n_c, E_c, self.nonce, _pub(self.e))
        km_s, km_c, sk = _derive(ikm, th)
        mac_s = _mac(km_s, th, b"server")
        self._pending = (th, km_c, sk, mac_s)
        return self.nonce + _pub(self.e) + mac_s

    def finish(self, mac_c: bytes) -> bytes:
        if self._pending is None:
            raise AuthError("finish before respond")
        th, km_c, sk, mac_s = self._pending
        if not hmac.compare_digest(mac_c, _mac(km_c, th, mac_s, b"client")):
            raise AuthError("client key confirmation failed")
        self.session_key = sk
        self.ssid = hashlib.sha256(b"ssid" + th).digest()
        return sk
