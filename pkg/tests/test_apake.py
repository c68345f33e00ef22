import random

import pytest

from boprf.apake import AkeClient, AkeServer, AppStore, AuthError, make_record, open_credentials
from boprf.crypto import EnvelopeAuthError


def _pair(rng, gamma=12345):
    rec = make_record(b"alice", gamma, rng)
    p_u, P_u, P_s = open_credentials(gamma, rec.envelope)
    return rec, AkeClient(p_u, P_u, P_s, rng), AkeServer(rec, rng)


def test_handshake_agrees(rng):
    rec, client, server = _pair(rng)
    resp = server.respond(client.init_message())
    fin = client.finish_message(resp)
    assert server.finish(fin) == client.session_key
    assert server.ssid == client.ssid and len(client.ssid) == 32


def test_wrong_rw_does_not_open(rng):
    rec = make_record(b"alice", 1, rng)
    with pytest.raises(EnvelopeAuthError):
        open_credentials(2, rec.envelope)


def test_forged_keys_fail_confirmation(rng):
    rec, _, server = _pair(rng)
    impostor = AkeClient(rng.randbytes(32), rec.client_pub, rec.server_pub, rng)
    resp = server.respond(impostor.init_message())
    with pytest.raises(AuthError):
        impostor.finish_message(resp)
    with pytest.raises(AuthError):
        server.finish(b"\x00" * 32)


def test_server_mac_checked(rng):
    _, client, server = _pair(rng)
    resp = bytearray(server.respond(client.init_message()))
    resp[-1] ^= 1
    with pytest.raises(AuthError):
        client.finish_message(bytes(resp))


def test_malformed_messages(rng):
    _, client, server = _pair(rng)
    with pytest.raises(AuthError):
        server.respond(b"short")
    with pytest.raises(AuthError):
        client.finish_message(b"short")
    with pytest.raises(AuthError):
        AkeServer(make_record(b"x", 1, rng), rng).finish(b"\x00" * 32)


def test_appstore_persistence(tmp_path, rng):
    path = tmp_path / "app.jsonl"
    store = AppStore(path)
    r1 = make_record(b"alice", 1, rng)
    r2 = make_record(b"alice", 2, rng)
    store.put(r1)
    store.put(r2)
    again = AppStore(path)
    assert again.get(b"alice") == r2
    assert again.get(b"bob") is None
