import io
import struct

import pytest
from hypothesis import given, strategies as st

from boprf.algebra import FIELD
from boprf.wire import (
    MAX_FRAME,
    Abort,
    AbortReason,
    Flow,
    Frame,
    FrameError,
    Hello,
    IcKey,
    MacPackage,
    MessageType,
    Params,
    dec_npa,
    dec_vecs,
    decode_frame,
    enc_npa,
    enc_vecs,
    encode_frame,
    read_frame,
)

SID = bytes(range(16))
vec3 = st.tuples(*[st.integers(0, FIELD.p - 1)] * 3)


def test_header_layout():
    data = encode_frame(Frame(MessageType.PARAMS, SID, b"abc"))
    assert data[:4] == struct.pack(">I", 20)
    assert data[4] == 0x02
    assert data[5:21] == SID and data[21:] == b"abc"


@given(st.sampled_from(list(MessageType)), st.binary(max_size=300), st.binary(max_size=40))
def test_frame_roundtrip(mtype, payload, tail):
    data = encode_frame(Frame(mtype, SID, payload))
    frame, rest = decode_frame(data + tail)
    assert frame == Frame(mtype, SID, payload) and rest == tail
    assert read_frame(io.BytesIO(data)) == frame


@given(st.binary(max_size=64))
def test_decoder_never_crashes_on_garbage(blob):
    try:
        decode_frame(blob)
    except FrameError as e:
        assert e.kind in {"truncated", "oversize", "unknown-type", "malformed"}


def test_error_kinds():
    good = encode_frame(Frame(MessageType.HELLO, SID, b"xyz"))
    with pytest.raises(FrameError) as e:
        decode_frame(good[:-1])
    assert e.value.kind == "truncated"
    with pytest.raises(FrameError) as e:
        decode_frame(struct.pack(">IB16s", MAX_FRAME + 1, 1, SID))
    assert e.value.kind == "oversize"
    with pytest.raises(FrameError) as e:
        decode_frame(struct.pack(">IB16s", 17, 0xEE, SID))
    assert e.value.kind == "unknown-type"
    with pytest.raises(FrameError) as e:
        decode_frame(struct.pack(">IB16s", 3, 1, SID))
    assert e.value.kind == "malformed"
    with pytest.raises(FrameError):
        read_frame(io.BytesIO(good[:10]))


def test_message_codecs():
    h = Hello(Flow.APAKE_LOGIN, b"alice", 0)
    assert Hello.decode(h.encode()) == h
    p = Params(32, 65, 4, 1500, 1, True, False)
    assert Params.decode(p.encode()) == p
    a = Abort(AbortReason.BLOCKED, "no")
    assert Abort.decode(a.encode()) == a
    k = IcKey(65, True, b"k" * 35)
    assert IcKey.decode(k.encode()) == k
    m = MacPackage(b"rid", b"t" * 16, b"file body")
    assert MacPackage.decode(m.encode()) == m
    assert MacPackage.from_frame_bytes(m.to_frame_bytes()) == m
    with pytest.raises(FrameError):
        Hello.decode(b"\x09\x00\x00\x00")
    with pytest.raises(FrameError):
        Params.decode(b"\x00")
    with pytest.raises(FrameError):
        MacPackage.decode(b"\x00\x05ab")


@given(st.lists(vec3, max_size=6), vec3)
def test_vector_batches(vs, a):
    assert dec_vecs(enc_vecs(vs), 3) == list(vs)
    masks = [tuple(reversed(v)) for v in vs]
    a2, r1s, ms = dec_npa(enc_npa(a, vs, masks), 3)
    assert a2 == a and list(r1s) == list(vs) and list(ms) == masks


def test_batch_length_mismatch():
    with pytest.raises(FrameError):
        dec_vecs(enc_vecs([(1, 2, 3)])[:-1], 3)
    with pytest.raises(FrameError):
        dec_vecs(struct.pack(">I", 2) + FIELD.vector_to_bytes((1, 2, 3)), 3)
    with pytest.raises(FrameError):
        dec_npa(b"\x00", 3)


def test_empty_and_max_payload():
    empty = Frame(MessageType.ACK, SID)
    assert decode_frame(encode_frame(empty)) == (empty, b"")
    big = Frame(MessageType.MAC_FORWARD, SID, bytes(MAX_FRAME - 17))
    frame, rest = decode_frame(encode_frame(big))
    assert frame == big and rest == b""
    with pytest.raises(FrameError) as e:
        encode_frame(Frame(MessageType.MAC_FORWARD, SID, bytes(MAX_FRAME - 16)))
    assert e.value.kind == "oversize"
