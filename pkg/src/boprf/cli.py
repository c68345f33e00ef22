"""Command-line front end.

Exit codes: 0 success, 1 error, 2 usage, 3 input blocked, 4 authentication
failure, 5 I/O or connection failure.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import click

from .blocklist import Blocklist, build_blocklist, measure_accuracy
from .corpus import synthetic_corpus
from .embed import EmbeddingKey, Scheme, expand_edit_ball
from .metric import MetricParams, ParameterError
from .protocol import Keystore, session_rng, run_explicit_check, run_implicit_check
from .wire import AbortReason, FrameError, MacPackage

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_BLOCKED, EXIT_AUTH, EXIT_IO = 0, 1, 2, 3, 4, 5

DEALER_BANNER = "WARNING: trusted-dealer backend, NOT secure for deployment; run only over authenticated channels."


class Exit(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


def _emit(ctx: click.Context, data: dict, text: str) -> None:
    if ctx.obj["json"]:
        click.echo(json.dumps(data, sort_keys=True))
    else:
        click.echo(text)


def _fail(ctx: click.Context, code: int, status: str, message: str, **extra) -> None:
    if ctx.obj["json"]:
        click.echo(json.dumps({"status": status, "error": message, **extra}, sort_keys=True))
        ctx.exit(code)
    raise Exit(message, code)


def _addr(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise click.BadParameter(f"expected HOST:PORT, got {value!r}")
    return host, int(port)


def _secret(value: str | None, from_stdin: bool, what: str) -> bytes:
    if from_stdin:
        return sys.stdin.buffer.readline().rstrip(b"\r\n")
    if value is None:
        raise click.UsageError(f"{what} required (flag or --{what}-stdin)")
    return value.encode()


@click.group()
@click.option("--json", "as_json", is_flag=True, help="Machine-readable JSON output.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx: click.Context, as_json: bool, verbose: bool) -> None:
    """Blocklisted oblivious PRF: blocklists, server, aPAKE and MAC demos."""
    ctx.ensure_object(dict)
    ctx.obj["json"] = as_json
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr)


@main.command("build-blocklist")
@click.argument("corpus", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out", required=True, type=click.Path(path_type=Path))
@click.option("--scheme", type=click.Choice(["password", "binary"]), default="password", show_default=True)
@click.option("--edit-radius", default=1, show_default=True, help="Edit-distance ball radius used for coverage ranking.")
@click.option("--t", "t", default=2, show_default=True, help="Hamming threshold t; the SUR threshold is T = 2t.")
@click.option("--max-size", default=1500, show_default=True)
@click.option("--delta", type=int, default=None, help="Embedding length (default 32 passwords, 256 binaries).")
@click.option("--theta-mode", type=click.Choice(["exact", "privacy"]), default="exact", show_default=True)
@click.option("--top", type=int, default=None, help="Keep only the first N corpus lines (most common first).")
@click.option("--expand", default=0, show_default=True, help="Add everything within this edit distance of the kept lines.")
@click.option("--seed", default=None, help="Derive the embedding key from this seed (deterministic output).")
@click.pass_context
def build_blocklist_cmd(ctx, corpus, out, scheme, edit_radius, t, max_size, delta, theta_mode, top, expand, seed):
    """Rank CORPUS items by edit-ball coverage and write a BOPF blocklist."""
    sch = Scheme.PASSWORD if scheme == "password" else Scheme.BINARY
    delta = delta or (32 if sch == Scheme.PASSWORD else 256)
    try:
        params = MetricParams.for_mode(theta_mode, delta, t)
    except ParameterError as e:
        raise click.UsageError(str(e))
    try:
        if sch == Scheme.PASSWORD:
            items = [ln for ln in corpus.read_bytes().splitlines() if ln.strip()]
        else:
            items = [p.read_bytes() for p in sorted(corpus.iterdir()) if p.is_file()]
    except OSError as e:
        _fail(ctx, EXIT_IO, "io-error", str(e))
    if top is not None:
        items = items[:top]
    if expand:
        items = expand_edit_ball(items, expand)
    if not items:
        _fail(ctx, EXIT_ERROR, "error", "empty corpus")
    key = EmbeddingKey.random(sch, delta, session_rng(seed, "embedding-key"))
    bl = build_blocklist(items, edit_radius if sch == Scheme.PASSWORD else 0, max_size, key, params)
    try:
        bl.save(out)
    except OSError as e:
        _fail(ctx, EXIT_IO, "io-error", str(e))
    covered = bl.coverage[-1] if bl.coverage else 0
    stats = {
        "status": "ok",
        "out": str(out),
        "selected": len(bl),
        "universe": bl.raw_size,
        "covered": covered,
        "coverage": covered / bl.raw_size,
        "delta": delta,
        "theta": params.theta,
        "T": params.T,
    }
    _emit(ctx, stats, f"wrote {out}: {len(bl)} of {bl.raw_size} items, covering {covered} ({stats['coverage']:.1%}); "
          f"delta={delta} theta={params.theta} T={params.T}")


@main.command()
@click.option("--listen", default="127.0.0.1:7400", show_default=True, envvar="BOPRF_LISTEN")
@click.option("--blocklist", "blocklist_path", required=True, type=click.Path(exists=True, path_type=Path), envvar="BOPRF_BLOCKLIST")
@click.option("--keystore", required=True, type=click.Path(path_type=Path), envvar="BOPRF_KEYSTORE")
@click.option("--seed", default=None, envvar="BOPRF_SEED", help="Deterministic randomness (testing only).")
@click.option("--strong/--plain", default=True, show_default=True, help="F2-hardened tokens for password flows.")
@click.option("--fixed-key", is_flag=True, help="Use the blocklist's stored embedding key instead of a fresh one per check.")
@click.option("--rate-limit", default=10, show_default=True, help="Failed attempts per client before lockout (0 disables).")
@click.option("--theta-mode", type=click.Choice(["exact", "privacy"]), default=None, help="Refuse to start unless the blocklist uses this mode.")
@click.pass_context
def serve(ctx, listen, blocklist_path, keystore, seed, strong, fixed_key, rate_limit, theta_mode):
    """Run the B-OPRF server (with an in-process dealer) until interrupted."""
    from .apake import AppStore
    from .net import BoprfServer, ServerConfig

    host, port = _addr(listen)
    try:
        bl = Blocklist.load(blocklist_path)
        if theta_mode is not None and bl.params.is_exact != (theta_mode == "exact"):
            raise click.UsageError(f"blocklist theta={bl.params.theta} is not {theta_mode} mode")
        f2_path = Path(str(keystore) + ".f2key")
        if seed is None:
            if not f2_path.exists():
                f2_path.write_bytes(os.urandom(16))
            f2_key = f2_path.read_bytes()
        else:
            f2_key = None
        cfg = ServerConfig(
            bl,
            Keystore(keystore),
            AppStore(str(keystore) + ".apake"),
            seed=seed,
            strong=strong,
            f2_key=f2_key,
            fresh_key=not fixed_key,
            rate_limit=rate_limit or None,
        )
        srv = BoprfServer(cfg, host, port)
    except OSError as e:
        _fail(ctx, EXIT_IO, "io-error", str(e))
    click.echo(DEALER_BANNER, err=True)
    h, p = srv.address
    _emit(ctx, {"status": "listening", "host": h, "port": p}, f"listening on {h}:{p}")
    sys.stdout.flush()
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.stop()


def _net_call(ctx, fn, *args, **kwargs):
    from .apake import AuthError
    from .net import RemoteAbort

    try:
        return fn(*args, **kwargs)
    except RemoteAbort as e:
        code = {AbortReason.BLOCKED: EXIT_BLOCKED, AbortReason.AUTH: EXIT_AUTH}.get(e.abort.reason, EXIT_ERROR)
        _fail(ctx, code, e.abort.reason.name.lower(), e.abort.message)
    except AuthError as e:
        _fail(ctx, EXIT_AUTH, "auth-failed", str(e))
    except (OSError, FrameError) as e:
        _fail(ctx, EXIT_IO, "connection-error", str(e))


_connect_opt = click.option("--connect", required=True, envvar="BOPRF_CONNECT", help="Server HOST:PORT.")
_seed_opt = click.option("--seed", default=None, envvar="BOPRF_SEED", help="Deterministic randomness (testing only).")


@main.command("apake-register")
@_connect_opt
@click.option("--user", required=True)
@click.option("--password", default=None)
@click.option("--password-stdin", is_flag=True)
@_seed_opt
@click.pass_context
def apake_register_cmd(ctx, connect, user, password, password_stdin, seed):
    """Register a password; refused if it is close to the server's blocklist."""
    from .net import apake_register

    pw = _secret(password, password_stdin, "password")
    res = _net_call(ctx, apake_register, _addr(connect), pw, user.encode(), seed=seed)
    if res.blocked:
        _fail(ctx, EXIT_BLOCKED, "blocked", "password rejected: too close to a blocklisted password")
    _emit(ctx, {"status": "registered", "user": user, "bytes": res.traffic.total}, f"registered {user}")


@main.command("apake-login")
@_connect_opt
@click.option("--user", required=True)
@click.option("--password", default=None)
@click.option("--password-stdin", is_flag=True)
@_seed_opt
@click.pass_context
def apake_login_cmd(ctx, connect, user, password, password_stdin, seed):
    """Log in; prints the session id on success."""
    from .net import apake_login

    pw = _secret(password, password_stdin, "password")
    res = _net_call(ctx, apake_login, _addr(connect), pw, user.encode(), seed=seed)
    _emit(
        ctx,
        {"status": "ok", "user": user, "ssid": res.ssid.hex(), "key_id": res.session_key[:8].hex()},
        f"login ok: ssid={res.ssid.hex()}",
    )


@main.command("mac-issue")
@_connect_opt
@click.option("--file", "file_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out", required=True, type=click.Path(path_type=Path), help="Package to forward to the verifier.")
@click.option("--record-id", default=None, help="Record id (default: random).")
@_seed_opt
@click.pass_context
def mac_issue_cmd(ctx, connect, file_path, out, record_id, seed):
    """Obtain a tag for FILE unless it resembles a blocklisted binary."""
    from .net import mac_issue

    rid = (record_id or session_rng(seed, "record-id").randbytes(8).hex()).encode()
    pkg = _net_call(ctx, mac_issue, _addr(connect), file_path.read_bytes(), rid, seed=seed)
    if pkg is None:
        _fail(ctx, EXIT_BLOCKED, "blocked", "file rejected: similar to a blocklisted binary")
    try:
        out.write_bytes(pkg.to_frame_bytes())
    except OSError as e:
        _fail(ctx, EXIT_IO, "io-error", str(e))
    _emit(
        ctx,
        {"status": "issued", "record_id": rid.decode(), "tag": pkg.tag.hex(), "package": str(out)},
        f"issued tag {pkg.tag.hex()} for record {rid.decode()} -> {out}",
    )


@main.command("mac-verify")
@_connect_opt
@click.option("--package", "package_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--file", "file_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--tag", default=None, help="Hex tag (with --file and --record-id).")
@click.option("--record-id", default=None)
@_seed_opt
@click.pass_context
def mac_verify_cmd(ctx, connect, package_path, file_path, tag, record_id, seed):
    """Check a (file, tag) pair with the policy server."""
    from .net import mac_verify

    try:
        if package_path is not None:
            pkg = MacPackage.from_frame_bytes(package_path.read_bytes())
            if file_path is not None:
                pkg = MacPackage(pkg.record_id, pkg.tag, file_path.read_bytes())
        elif file_path is not None and tag and record_id:
            pkg = MacPackage(record_id.encode(), bytes.fromhex(tag), file_path.read_bytes())
        else:
            raise click.UsageError("give --package, or --file with --tag and --record-id")
    except (OSError, FrameError, ValueError) as e:
        _fail(ctx, EXIT_IO, "io-error", str(e))
    ok = _net_call(ctx, mac_verify, _addr(connect), pkg, seed=seed)
    if not ok:
        _fail(ctx, EXIT_AUTH, "invalid", "tag does not verify")
    _emit(ctx, {"status": "valid", "record_id": pkg.record_id.decode(errors="replace")}, "tag valid")


def _lines(path: Path) -> list[bytes]:
    return [ln for ln in path.read_bytes().splitlines() if ln.strip()]


@main.command("eval-accuracy")
@click.option("--blocklist", "blocklist_path", type=click.Path(exists=True, path_type=Path))
@click.option("--positives", type=click.Path(exists=True, path_type=Path))
@click.option("--negatives", type=click.Path(exists=True, path_type=Path))
@click.option("--t", "ts", default="0,1,2,3,4", show_default=True, help="Comma-separated Hamming thresholds.")
@click.option("--sizes", default=None, help="Comma-separated |L| prefixes (default: whole list).")
@click.option("--synthetic", type=int, default=None, help="Build a seeded synthetic corpus instead of reading files.")
@click.pass_context
def eval_accuracy_cmd(ctx, blocklist_path, positives, negatives, ts, sizes, synthetic):
    """FAR/FRR table over thresholds and blocklist sizes."""
    thresholds = [int(x) for x in ts.split(",")]
    try:
        if synthetic is not None:
            corpus = synthetic_corpus(synthetic)
            key = EmbeddingKey.random(Scheme.PASSWORD, 32, session_rng(synthetic, "embedding-key"))
            size_list = [int(x) for x in (sizes or "500,1500,3000").split(",")]
            bl = build_blocklist(corpus.blocked, 1, max(size_list), key, MetricParams.exact(32, 0))
            pos, neg = corpus.positives, corpus.negatives
        else:
            if not (blocklist_path and positives and negatives):
                raise click.UsageError("need --blocklist, --positives and --negatives (or --synthetic)")
            bl = Blocklist.load(blocklist_path)
            pos, neg = _lines(positives), _lines(negatives)
            size_list = [int(x) for x in sizes.split(",")] if sizes else [len(bl)]
    except OSError as e:
        _fail(ctx, EXIT_IO, "io-error", str(e))
    rows = []
    for n in size_list:
        sub = bl.prefix(n)
        for t in thresholds:
            rows.append(measure_accuracy(sub.with_threshold(t), pos, neg).as_dict())
    if ctx.obj["json"]:
        click.echo(json.dumps({"status": "ok", "rows": rows}, sort_keys=True))
        return
    click.echo(f"{'L':>6} {'T':>3} {'FAR':>8} {'FRR':>8}")
    for r in rows:
        click.echo(f"{r['L']:>6} {r['T']:>3} {r['far']:>8.4f} {r['frr']:>8.4f}")


@main.command()
@click.option("--sizes", default="100,200,300", show_default=True, help="Comma-separated |L| values.")
@click.option("--delta", default=32, show_default=True)
@click.option("--t", "t", default=2, show_default=True)
@click.option("--theta-mode", type=click.Choice(["exact", "privacy"]), default="exact", show_default=True)
@click.option("--runs", default=1, show_default=True)
@click.option("--loopback/--in-process", default=True, show_default=True, help="Measure over a local TCP server.")
@click.option("--seed", default="bench")
@click.option("--out", "out", type=click.Path(path_type=Path), default=None, help="CSV file (default stdout).")
@click.pass_context
def bench(ctx, sizes, delta, t, theta_mode, runs, loopback, seed, out):
    """Per-phase latency and bytes for explicit and implicit checks versus |L|."""
    from .corpus import random_word
    from .net import BoprfServer, ServerConfig, explicit_check, implicit_check

    params = MetricParams.for_mode(theta_mode, delta, t)
    rng = session_rng(seed, "bench-corpus")
    size_list = [int(x) for x in sizes.split(",")]
    pool = sorted({random_word(rng, 12, 16) for _ in range(max(size_list) * 2)})[: max(size_list)]
    key = EmbeddingKey.random(Scheme.PASSWORD, delta, rng)
    fields = ["L", "run", "explicit_up", "explicit_down", "explicit_total", "implicit_total",
              "t_embed", "t_test", "t_commit", "t_implicit"]
    rows = []
    for n in size_list:
        bl = Blocklist.from_items(pool[:n], key, params)
        for r in range(runs):
            s = f"{seed}/{n}/{r}"
            w = b"bench-password-" + str(r).encode()
            if loopback:
                with BoprfServer(ServerConfig(bl, seed=s, strong=False, rate_limit=None)) as srv:
                    ex = explicit_check(srv.address, w, seed=s)
                    im = implicit_check(srv.address, w, seed=s + "/ic")
            else:
                store = Keystore()
                ex = run_explicit_check(w, bl, seed=s, store=store)
                im = run_implicit_check(w, store, seed=s + "/ic")
            rows.append({
                "L": n, "run": r,
                "explicit_up": ex.traffic.sent, "explicit_down": ex.traffic.received,
                "explicit_total": ex.traffic.total, "implicit_total": im.traffic.total,
                "t_embed": round(ex.timings.get("embed", 0.0), 6), "t_test": round(ex.timings.get("test", 0.0), 6),
                "t_commit": round(ex.timings.get("commit", 0.0), 6), "t_implicit": round(im.timings.get("implicit", 0.0), 6),
            })
    if ctx.obj["json"]:
        click.echo(json.dumps({"status": "ok", "rows": rows}, sort_keys=True))
        return
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=fields)
    wr.writeheader()
    wr.writerows(rows)
    if out is not None:
        out.write_text(buf.getvalue())
    else:
        click.echo(buf.getvalue(), nl=False)


if __name__ == "__main__":
    main()
