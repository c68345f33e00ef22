import random

import pytest

from boprf.algebra import FIELD
from boprf.blocklist import Blocklist, is_blocked
from boprf.crypto import PrfKey, PrpKey, hash_to_vector, prf_eval
from boprf.embed import EmbeddingKey, Scheme, embed, embed_to_field
from boprf.metric import MetricParams, eval_domain, map_bits, sur_distance
from boprf.mpc import DealerBackend, EmServerInput, embed_and_map, hash_term
from boprf.protocol import (
    ExplicitCheckServer,
    ImplicitCheckServer,
    client_hash,
    KeyRegistry,
    KeyReuseError,
    Keystore,
    KeystoreError,
    RateLimiter,
    ServerState,
    run_explicit_check,
    run_implicit_check,
    session_rng,
    token,
)
from boprf.wire import AbortReason

BLOCKED = [b"password", b"dragon", b"letmein", b"monkey", b"sunshine", b"princess"]


@pytest.fixture(scope="module")
def blocklist():
    key = EmbeddingKey.random(Scheme.PASSWORD, 16, random.Random(2))
    return Blocklist.from_items(BLOCKED, key, MetricParams.exact(16, 1))


def oracle_gamma(state: ServerState, w: bytes, f2_key=None) -> int:
    return prf_eval(state.k1, token(w, state.k_E, len(state.y), f2_key))


@pytest.mark.parametrize("strong", [False, True])
def test_explicit_matches_oracle(blocklist, strong):
    f2 = b"f" * 16 if strong else None
    store = Keystore()
    res = run_explicit_check(b"correct horse", blocklist, seed=1, store=store, strong=strong, f2_key=f2)
    assert res.ok and not res.blocked
    assert res.state.y == token(b"correct horse", res.state.k_E, blocklist.params.theta, f2)
    assert res.gamma == oracle_gamma(res.state, b"correct horse", f2)
    assert store.get(b"client") == res.state


def test_blocked_input_aborts_without_state(blocklist):
    store = Keystore()
    res = run_explicit_check(b"dragon", blocklist, seed=2, store=store)
    assert res.blocked and res.gamma is None
    assert res.abort.reason == AbortReason.BLOCKED
    assert BLOCKED.index(b"dragon") in res.indices
    assert len(store) == 0


def test_blocked_decision_matches_plaintext_oracle(blocklist):
    rng = random.Random(5)
    for i in range(15):
        w = bytes(rng.choice(b"abcdefgh") for _ in range(rng.randint(5, 8)))
        res = run_explicit_check(w, blocklist, seed=i, fresh_key=False)
        assert res.blocked == is_blocked(blocklist, w)


def test_implicit_check_roundtrip(blocklist):
    store = Keystore()
    ex = run_explicit_check(b"opensesame", blocklist, seed=3, store=store)
    good = run_implicit_check(b"opensesame", store, seed=4)
    assert good.gamma == ex.gamma
    bad = run_implicit_check(b"opensesamf", store, seed=4)
    assert bad.gamma != ex.gamma
    unknown = run_implicit_check(b"opensesame", store, client_id=b"nobody")
    assert unknown.gamma is None and unknown.abort.reason == AbortReason.UNKNOWN_CLIENT


def test_implicit_strong_mode(blocklist):
    store, f2 = Keystore(), b"k" * 16
    ex = run_explicit_check(b"tr0ub4dor", blocklist, seed=5, store=store, strong=True, f2_key=f2)
    assert run_implicit_check(b"tr0ub4dor", store, seed=6, f2_key=f2).gamma == ex.gamma
    assert run_implicit_check(b"tr0ub4dor", store, seed=6, f2_key=b"x" * 16).gamma != ex.gamma


def test_perturbed_token_fails(blocklist):
    store = Keystore()
    ex = run_explicit_check(b"abcdefg12", blocklist, seed=7, store=store)

    def bump(y):
        return (y[0] + 1,) + y[1:]

    assert run_implicit_check(b"abcdefg12", store, seed=8, perturb=bump).gamma != ex.gamma


@pytest.mark.parametrize("which", [0, 1])
def test_tampered_commit_breaks_later_login(blocklist, which):
    store = Keystore()

    def tamper(p1, p2):
        parts = [list(p1), list(p2)]
        parts[which][3] = (parts[which][3] + 7) % FIELD.p
        return parts

    res = run_explicit_check(b"zebra-crossing", blocklist, seed=9, store=store, tamper=tamper)
    if res.ok:
        assert run_implicit_check(b"zebra-crossing", store, seed=10).gamma != res.gamma


def test_dealer_backend_same_outputs(blocklist):
    a = run_explicit_check(b"qwertyuiop", blocklist, seed=11, store=Keystore())
    b = run_explicit_check(b"qwertyuiop", blocklist, seed=11, store=Keystore(), backend=DealerBackend())
    assert a.gamma == b.gamma and a.state == b.state
    assert a.traffic.total == b.traffic.total


def test_mac_mode(blocklist):
    store = Keystore()
    res = run_explicit_check(b"file-contents", blocklist, seed=12, store=store, mac_mode=True)
    assert res.ok
    assert run_implicit_check(b"file-contents", store, seed=13, mac_mode=True).gamma == res.gamma


def test_registry_refuses_key_reuse(blocklist):
    reg = KeyRegistry()
    run_explicit_check(b"uniqueword", blocklist, seed=14, registry=reg)
    with pytest.raises(KeyReuseError):
        run_explicit_check(b"uniqueword", blocklist, seed=14, registry=reg)
    run_explicit_check(b"uniqueword", blocklist, seed=15, registry=reg)
    assert len(reg) == 4


def test_rate_limiter(blocklist):
    lim = RateLimiter(limit=2)
    for i in range(2):
        assert run_explicit_check(b"dragon", blocklist, seed=20 + i, rate_limiter=lim).blocked
    res = run_explicit_check(b"fine-password", blocklist, seed=30, rate_limiter=lim)
    assert res.abort.reason == AbortReason.RATE_LIMITED
    assert RateLimiter(limit=None).allowed(b"anyone")


def test_keystore_persistence(tmp_path, blocklist):
    path = tmp_path / "ks.log"
    store = Keystore(path)
    ex = run_explicit_check(b"persisted", blocklist, seed=16, store=store, client_id=b"alice")
    reopened = Keystore(path)
    assert reopened.get(b"alice") == ex.state
    assert b"alice" in reopened and b"bob" not in reopened
    data = bytearray(path.read_bytes())
    data[-1] ^= 1
    path.write_bytes(bytes(data))
    with pytest.raises(KeystoreError):
        Keystore(path)
    path.write_bytes(bytes(data[:-5]))
    with pytest.raises(KeystoreError):
        Keystore(path)


def test_session_rng_determinism():
    assert session_rng(1, "a").random() == session_rng(1, "a").random()
    assert session_rng(1, "a").random() != session_rng(1, "b").random()
    assert session_rng(None, "a") is not None


def test_traffic_linear_in_list_size():
    key = EmbeddingKey.random(Scheme.PASSWORD, 16, random.Random(1))
    words = [b"w%03d" % i for i in range(12)]
    totals = []
    for n in (3, 6, 9, 12):
        bl = Blocklist.from_items(words[:n], key, MetricParams.exact(16, 0))
        res = run_explicit_check(b"zzzzzzzzzz", bl, seed=n, fresh_key=False)
        assert res.ok
        totals.append(res.traffic.total)
    diffs = {b - a for a, b in zip(totals, totals[1:])}
    assert len(diffs) == 1


def test_identity_permutations_give_plain_vectors(blocklist):
    theta = blocklist.params.theta
    k_E = blocklist.key
    ident = PrpKey.identity(theta)
    p1, p2 = embed_and_map(b"plainly", EmServerInput(k_E, ident, ident, theta))
    v = embed_to_field(k_E, b"plainly", eval_domain(16, theta))
    assert p1 == v and p2 == hash_term(b"plainly", v, k_E, theta)


def test_fresh_sessions_mask_differently(blocklist):
    outs = []
    for s in (1, 2):
        srv = ExplicitCheckServer(blocklist, session_rng(s, "server"), fresh_key=False)
        p1, p2 = embed_and_map(b"same-pw", srv.em_input())
        assert srv.kappa1.invert(p1) == embed_to_field(blocklist.key, b"same-pw", srv.X)
        outs.append((p1, p2))
    assert outs[0][0] != outs[1][0] and outs[0][1] != outs[1][1]


def test_far_inputs_never_blocked():
    rng = random.Random(21)
    key = EmbeddingKey.random(Scheme.PASSWORD, 32, rng)
    params = MetricParams.exact(32, 2)
    words = [bytes(rng.choice(b"abc") for _ in range(10)) for _ in range(4)]
    bl = Blocklist.from_items(words, key, params)
    X = params.domain()
    done = 0
    while done < 200:
        w = bytes(rng.choice(b"xyz0123456789") for _ in range(12))

        v = embed_to_field(key, w, X)
        if min(sur_distance(v, l, X, 32) for l in bl.vectors) <= params.T:
            continue
        res = run_explicit_check(w, bl, seed=f"far-{done}", fresh_key=False)
        assert not res.blocked and res.ok
        done += 1


def test_token_matches_direct_computation(blocklist):
    for i in range(200):
        w = b"direct-%d" % i
        store = Keystore()
        res = run_explicit_check(w, blocklist, seed=f"tok-{i}", store=store)
        if res.blocked:
            continue
        st = res.state
        v = map_bits(embed(st.k_E, w), blocklist.params.domain())
        h = hash_to_vector(b"boprf-token", [w, FIELD.vector_to_bytes(v), st.k_E.to_bytes()], len(v))
        assert st.y == FIELD.vadd(v, h)
        assert res.gamma == prf_eval(st.k1, st.y)


def test_single_component_implicit_check(rng):
    y = (FIELD.random(rng),)
    st = ServerState(client_hash(b"c"), EmbeddingKey.random(Scheme.PASSWORD, 8, rng), PrfKey.random(rng), y)
    srv = ImplicitCheckServer(st, rng)
    assert srv.sigma == (prf_eval(st.k1, y),)
    us, vs = srv.ole_inputs()
    good = (us[0] * y[0] + vs[0]) % FIELD.p
    bad = (us[0] * (y[0] + 1) + vs[0]) % FIELD.p
    assert good == prf_eval(st.k1, y) != bad


def test_repeated_implicit_checks_idempotent(blocklist):
    store = Keystore()
    ex = run_explicit_check(b"repeatable", blocklist, seed=40, store=store)
    assert {run_implicit_check(b"repeatable", store, seed=s).gamma for s in range(10)} == {ex.gamma}
