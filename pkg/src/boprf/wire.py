"""Frame format and payload codecs for every protocol message.

Frame layout (big-endian)::

    length u32 | msg_type u8 | session_id 16B | payload

``length`` counts everything after itself (payload plus 17 header bytes) and
is capped at 64 MiB. Numeric message codes are listed in WIRE.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import BinaryIO, Sequence

from .algebra import FIELD, FieldError

__all__ = [
    "MAX_FRAME",
    "HEADER",
    "MessageType",
    "Flow",
    "AbortReason",
    "FrameError",
    "Frame",
    "encode_frame",
    "decode_frame",
    "read_frame",
    "Hello",
    "Params",
    "Abort",
    "IcKey",
    "MacPackage",
    "enc_vec",
    "dec_vec",
    "enc_vecs",
    "dec_vecs",
    "enc_npa",
    "dec_npa",
    "enc_elem",
    "dec_elem",
]

MAX_FRAME = 64 * 1024 * 1024
HEADER = struct.Struct(">IB16s")
_FIXED = 17


class MessageType(IntEnum):
    HELLO = 0x01
    PARAMS = 0x02
    EM_REQ = 0x03
    EM_RESP = 0x04
    NPA_BATCH = 0x05
    OLE_BATCH_REQ = 0x06
    OLE_BATCH_RESP = 0x07
    COMMIT_BETA = 0x08
    RESULT_GAMMA = 0x09
    ABORT = 0x0A
    IC_KEY = 0x0B
    IC_OLE_REQ = 0x0C
    IC_OLE_RESP = 0x0D
    OPRF2_REQ = 0x0E
    OPRF2_RESP = 0x0F
    MAC_FORWARD = 0x10
    EM_KEY = 0x11
    APAKE_ENVELOPE = 0x12
    AKE_INIT = 0x13
    AKE_RESP = 0x14
    AKE_FINISH = 0x15
    ACK = 0x16


class Flow(IntEnum):
    EXPLICIT = 1
    IMPLICIT = 2
    APAKE_REGISTER = 3
    APAKE_LOGIN = 4
    MAC_ISSUE = 5
    MAC_VERIFY = 6


class AbortReason(IntEnum):
    BLOCKED = 1
    UNKNOWN_CLIENT = 2
    RATE_LIMITED = 3
    PROTOCOL = 4
    PARAMS = 5
    AUTH = 6
    INTERNAL = 7


class FrameError(ValueError):
    """Structured decoding failure; ``kind`` is truncated, oversize, unknown-type or malformed."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass(frozen=True)
class Frame:
    msg_type: MessageType
    session_id: bytes
    payload: bytes = b""

    def __post_init__(self):
        if len(self.session_id) != 16:
            raise FrameError("malformed", "session id must be 16 bytes")


def encode_frame(f: Frame) -> bytes:
    length = len(f.payload) + _FIXED
    if length > MAX_FRAME:
        raise FrameError("oversize", f"frame of {length} bytes exceeds {MAX_FRAME}")
    return HEADER.pack(length, int(f.msg_type), f.session_id) + f.payload


def _check_header(length: int, mtype: int) -> MessageType:
    if length < _FIXED:
        raise FrameError("malformed", f"length field {length} below header size")
    if length > MAX_FRAME:
        raise FrameError("oversize", f"length field {length} exceeds {MAX_FRAME}")
    try:
        return MessageType(mtype)
    except ValueError:
        raise FrameError("unknown-type", f"message type 0x{mtype:02x}") from None


def decode_frame(data: bytes) -> tuple[Frame, bytes]:
    """Decode one frame from the front of ``data``; returns (frame, remaining bytes)."""
    if len(data) < HEADER.size:
        raise FrameError("truncated", f"need {HEADER.size} header bytes, have {len(data)}")
    length, mtype, sid = HEADER.unpack_from(data)
    kind = _check_header(length, mtype)
    end = 4 + length
    if len(data) < end:
        raise FrameError("truncated", f"need {end} bytes, have {len(data)}")
    return Frame(kind, sid, bytes(data[HEADER.size : end])), bytes(data[end:])


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise FrameError("truncated", f"stream closed after {len(buf)} of {n} bytes")
        buf += chunk
    return bytes(buf)


def read_frame(stream: BinaryIO) -> Frame:
    head = _read_exact(stream, HEADER.size)
    length, mtype, sid = HEADER.unpack(head)
    kind = _check_header(length, mtype)
    return Frame(kind, sid, _read_exact(stream, length - _FIXED))


# payload codecs


def enc_elem(a: int) -> bytes:
    return FIELD.to_bytes(a)


def dec_elem(data: bytes) -> int:
    try:
        return FIELD.from_bytes(data)
    except FieldError as e:
        raise FrameError("malformed", str(e)) from None


def enc_vec(v: Sequence[int]) -> bytes:
    return FIELD.vector_to_bytes(v)


def dec_vec(data: bytes, theta: int | None = None) -> tuple[int, ...]:
    try:
        return FIELD.vector_from_bytes(data, theta)
    except FieldError as e:
        raise FrameError("malformed", str(e)) from None


def enc_vecs(vs: Sequence[Sequence[int]]) -> bytes:
    return struct.pack(">I", len(vs)) + b"".join(enc_vec(v) for v in vs)


def dec_vecs(data: bytes, theta: int) -> list[tuple[int, ...]]:
    if len(data) < 4:
        raise FrameError("malformed", "vector batch truncated")
    (n,) = struct.unpack_from(">I", data)
    width = theta * FIELD.nbytes
    if len(data) != 4 + n * width:
        raise FrameError("malformed", "vector batch length mismatch")
    return [dec_vec(data[4 + i * width : 4 + (i + 1) * width], theta) for i in range(n)]


def enc_npa(a: Sequence[int], r1s: Sequence[Sequence[int]], masks: Sequence[Sequence[int]]) -> bytes:
    """NPA_BATCH: shared vector a, then per-instance (r1, masks)."""
    out = [struct.pack(">I", len(r1s)), enc_vec(a)]
    for r1, m in zip(r1s, masks):
        out.append(enc_vec(r1))
        out.append(enc_vec(m))
    return b"".join(out)


def dec_npa(data: bytes, theta: int):
    if len(data) < 4:
        raise FrameError("malformed", "NPA batch truncated")
    (n,) = struct.unpack_from(">I", data)
    width = theta * FIELD.nbytes
    if len(data) != 4 + width * (1 + 2 * n):
        raise FrameError("malformed", "NPA batch length mismatch")
    vecs = [dec_vec(data[off : off + width], theta) for off in range(4, len(data), width)]
    return vecs[0], vecs[1::2], vecs[2::2]


@dataclass(frozen=True)
class Hello:
    flow: Flow
    client_id: bytes
    flags: int = 0

    def encode(self) -> bytes:
        return struct.pack(">BBH", self.flow, self.flags, len(self.client_id)) + self.client_id

    @classmethod
    def decode(cls, data: bytes) -> "Hello":
        if len(data) < 4:
            raise FrameError("malformed", "HELLO truncated")
        flow, flags, n = struct.unpack_from(">BBH", data)
        if len(data) != 4 + n:
            raise FrameError("malformed", "HELLO length mismatch")
        try:
            flow = Flow(flow)
        except ValueError:
            raise FrameError("malformed", f"unknown flow {flow}") from None
        return cls(flow, data[4:], flags)


@dataclass(frozen=True)
class Params:
    delta: int
    theta: int
    T: int
    n: int
    scheme: int
    strong: bool = False
    local_embed: bool = False

    _S = struct.Struct(">HHHIBB")

    def encode(self) -> bytes:
        flags = (1 if self.strong else 0) | (2 if self.local_embed else 0)
        return self._S.pack(self.delta, self.theta, self.T, self.n, self.scheme, flags)

    @classmethod
    def decode(cls, data: bytes) -> "Params":
        if len(data) != cls._S.size:
            raise FrameError("malformed", "PARAMS length mismatch")
        d, th, T, n, scheme, flags = cls._S.unpack(data)
        return cls(d, th, T, n, scheme, bool(flags & 1), bool(flags & 2))


@dataclass(frozen=True)
class Abort:
    reason: AbortReason
    message: str = ""

    def encode(self) -> bytes:
        m = self.message.encode()[:0xFFFF]
        return struct.pack(">BH", self.reason, len(m)) + m

    @classmethod
    def decode(cls, data: bytes) -> "Abort":
        if len(data) < 3:
            raise FrameError("malformed", "ABORT truncated")
        reason, n = struct.unpack_from(">BH", data)
        try:
            reason = AbortReason(reason)
        except ValueError:
            reason = AbortReason.INTERNAL
        return cls(reason, data[3 : 3 + n].decode(errors="replace"))


@dataclass(frozen=True)
class IcKey:
    theta: int
    strong: bool
    key: bytes

    def encode(self) -> bytes:
        return struct.pack(">HB", self.theta, int(self.strong)) + self.key

    @classmethod
    def decode(cls, data: bytes) -> "IcKey":
        if len(data) < 3:
            raise FrameError("malformed", "IC_KEY truncated")
        theta, strong = struct.unpack_from(">HB", data)
        return cls(theta, bool(strong), data[3:])


@dataclass(frozen=True)
class MacPackage:
    """What the issuing client forwards to a verifier: record id, tag and file."""

    record_id: bytes
    tag: bytes
    data: bytes

    def encode(self) -> bytes:
        return (
            struct.pack(">H", len(self.record_id))
            + self.record_id
            + struct.pack(">H", len(self.tag))
            + self.tag
            + self.data
        )

    @classmethod
    def decode(cls, payload: bytes) -> "MacPackage":
        try:
            (n,) = struct.unpack_from(">H", payload)
            rid = payload[2 : 2 + n]
            (m,) = struct.unpack_from(">H", payload, 2 + n)
            tag = payload[4 + n : 4 + n + m]
        except struct.error:
            raise FrameError("malformed", "MAC package truncated") from None
        if len(rid) != n or len(tag) != m:
            raise FrameError("malformed", "MAC package truncated")
        return cls(rid, tag, payload[4 + n + m :])

    def to_frame_bytes(self) -> bytes:
        """MAC_FORWARD frame, the on-disk form handed from issuer to verifier."""
        return encode_frame(Frame(MessageType.MAC_FORWARD, b"\x00" * 16, self.encode()))

    @classmethod
    def from_frame_bytes(cls, data: bytes) -> "MacPackage":
        frame, rest = decode_frame(data)
        if rest or frame.msg_type != MessageType.MAC_FORWARD:
            raise FrameError("malformed", "not a MAC_FORWARD package")
        return cls.decode(frame.payload)
