"""Command-line client for the historian.

Talks to a running server with ``--server URL``; otherwise opens the
storage directory in-process.  Exit status: 0 success, 1 operation error,
2 usage error (including malformed names).
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from pathlib import Path

from .certified import verify_proof_bytes
from .certs import describe, load_archive_file, read_cert
from .errors import ConfigError, HintsError, MalformedName, BadDate
from .histname import GRAMMAR_HINT, PrimaryName, parse_historic_name
from .integrity import AnchorLog
from .journal import Journal
from .world import builtin_scenario, run_script

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hints", description="Historic name-trail service")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--mode", choices=("plain", "certified"))
    p.add_argument("--loose", action="store_true", default=None, help="resolve without the end-of-link bound")
    p.add_argument("--storage", help="storage directory (default: $HINTS_STORAGE or ./hints-data)")
    p.add_argument("--listen", help="host:port for serve")
    p.add_argument("--server", help="base URL of a running server, e.g. http://127.0.0.1:8470")
    p.add_argument("--json", action="store_true", help="machine-readable output, one JSON record per line")
    sub = p.add_subparsers(dest="command", required=True)

    account = sub.add_parser("account").add_subparsers(dest="action", required=True)
    a = account.add_parser("new", help="create a person account")
    a.add_argument("--secret", required=True)
    a.add_argument("--hint", help="optional display hint")

    link = sub.add_parser("link").add_subparsers(dest="action", required=True)
    for action in ("request", "sever"):
        a = link.add_parser(action)
        a.add_argument("--account", required=True)
        a.add_argument("--secret", required=True)
        a.add_argument("name")
    a = link.add_parser("confirm")
    a.add_argument("challenge")
    a.add_argument("nonce")

    a = sub.add_parser("resolve", help="resolve a historic name")
    a.add_argument("name")
    a.add_argument("--proof", help="certified mode: write the proof bundle here")

    a = sub.add_parser("periods", help="list association periods of a primary name")
    a.add_argument("name")

    a = sub.add_parser("sweep", help="run the reestablishment sweep")
    a.add_argument("--to", help="virtual clock: advance day by day to this date, sweeping each day")

    sim = sub.add_parser("sim").add_subparsers(dest="action", required=True)
    a = sim.add_parser("run", help="run a scenario script (path, or builtin:NAME)")
    a.add_argument("script")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--export", help="write journal, clock and config into this storage directory")

    cert = sub.add_parser("cert").add_subparsers(dest="action", required=True)
    a = cert.add_parser("ingest")
    a.add_argument("files", nargs="+")
    a = cert.add_parser("show")
    a.add_argument("file")

    proof = sub.add_parser("proof").add_subparsers(dest="action", required=True)
    a = proof.add_parser("verify", help="verify a proof bundle offline")
    a.add_argument("file")
    a.add_argument("--anchors", required=True, help="anchor log file")
    a.add_argument("--archive", required=True, help="signed key archive file")
    a.add_argument("--authority", help="hex KeyId the archive must be signed by")

    sub.add_parser("serve", help="run the HTTP service")
    return p


def _emit(args, record: dict, text: str) -> None:
    if args.json:
        print(json.dumps(record, sort_keys=True, separators=(",", ":")))
    else:
        print(text)


def _config(args):
    from .service.config import load_config

    return load_config(args.config, mode=args.mode, loose=args.loose, storage=args.storage, listen=args.listen)


def _client(args):
    from .service.client import HttpClient, LocalClient
    from .service.core import Service

    if args.server:
        return HttpClient(args.server), None
    service = Service(_config(args))
    return LocalClient(service), service


def _call(client, method: str, **params):
    resp = client.call(method, **{k: v for k, v in params.items() if v is not None})
    if resp.ok:
        return resp.body
    reason = resp.error.reason if resp.error else resp.status
    detail = resp.error.detail if resp.error else ""
    if reason in ("malformed-name", "bad-date"):
        raise UsageError(f"{detail}")
    raise HintsError(f"{resp.status}: {reason}: {detail}" if detail else f"{resp.status}: {reason}")


def _check_name(text: str, historic: bool):
    try:
        return parse_historic_name(text) if historic else PrimaryName.parse(text)
    except (MalformedName, BadDate) as exc:
        msg = str(exc)
        raise UsageError(msg if GRAMMAR_HINT in msg else f"{msg}\n{GRAMMAR_HINT}") from None


def _render_resolution(body: dict) -> str:
    outcome = body["outcome"]
    if outcome == "resolved":
        return body["name"]
    if outcome != "multivalent":
        return outcome
    parts = [f"{h['person']} {h['first']}..{h['last']} -> {h['current'] or 'no-current-name'}" for h in body["holders"]]
    return "multivalent: " + "; ".join(parts)


def _sim_run(args) -> int:
    if args.script.startswith("builtin:"):
        text = builtin_scenario(args.script[len("builtin:") :])
    else:
        text = Path(args.script).read_text()
    journal = None
    export = Path(args.export) if args.export else None
    if export is not None:
        export.mkdir(parents=True, exist_ok=True)
        if (export / "journal.log").exists():
            raise UsageError(f"{export} already holds a journal")
        journal = Journal(export / "journal.log")
    result = run_script(text, seed=args.seed, journal=journal)
    for line in result.log:
        _emit(args, {"log": line}, line)
    for f in result.failures:
        _emit(args, {"failure": f}, f"FAIL {f}")
    if export is not None:
        journal.close()
        from .service.config import ServiceConfig

        today = result.world.today()
        (export / "clock").write_text(today.isoformat() + "\n")
        cfg = ServiceConfig(storage=export.resolve(), clock=f"virtual:{today}", kdf_iterations=1)
        (export / "hints.conf").write_text(cfg.to_text())
    return EXIT_OK if result.ok else EXIT_FAIL


def _proof_verify(args) -> int:
    anchors = AnchorLog(args.anchors)
    archive = load_archive_file(args.archive, bytes.fromhex(args.authority) if args.authority else None)
    verdict = verify_proof_bytes(Path(args.file).read_bytes(), anchors, archive)
    text = "accept" if verdict.valid else f"reject({verdict.reason})"
    _emit(args, {"verdict": "accept" if verdict.valid else "reject", "reason": verdict.reason}, text)
    return EXIT_OK if verdict.valid else EXIT_FAIL


def _serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    config = _config(args)
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
    return EXIT_OK


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "sim":
        return _sim_run(args)
    if cmd == "proof":
        return _proof_verify(args)
    if cmd == "serve":
        return _serve(args)
    if cmd == "cert" and args.action == "show":
        cert = read_cert(Path(args.file).read_bytes())
        d = describe(cert)
        _emit(args, d, "\n".join(f"{k}: {v}" for k, v in d.items()))
        return EXIT_OK
    if cmd == "resolve":
        _check_name(args.name, historic=True)
    if cmd == "periods" or (cmd == "link" and args.action != "confirm"):
        _check_name(args.name, historic=False)

    client, service = _client(args)
    try:
        if cmd == "account":
            body = _call(client, "create-account", secret=args.secret, display_hint=args.hint)
            _emit(args, body, body["account_id"])
        elif cmd == "link" and args.action == "request":
            body = _call(client, "request-link", account_id=args.account, secret=args.secret, name=args.name)
            _emit(args, body, body["challenge_id"])
        elif cmd == "link" and args.action == "confirm":
            body = _call(client, "confirm-link", challenge_id=args.challenge, nonce=args.nonce)
            _emit(args, body, body["outcome"])
            if body["outcome"] != "confirmed":
                return EXIT_FAIL
        elif cmd == "link":
            body = _call(client, "sever-link", account_id=args.account, secret=args.secret, name=args.name)
            _emit(args, {"severed": args.name}, f"severed {args.name}")
        elif cmd == "resolve":
            loose = None if args.loose is None else str(args.loose).lower()
            if args.proof:
                body = _call(client, "certified-resolve", name=args.name, loose=loose)
                Path(args.proof).write_bytes(base64.b64decode(body["proof"]))
                body = body["answer"]
            else:
                body = _call(client, "resolve", name=args.name, loose=loose)
            _emit(args, body, _render_resolution(body))
        elif cmd == "periods":
            body = _call(client, "list-periods", name=args.name)
            if args.json:
                for p in body["periods"]:
                    _emit(args, p, "")
            else:
                for p in body["periods"]:
                    print(f"{p['person']} {p['start']}..{p['end']}{'' if not p['active'] else ' (active)'}")
        elif cmd == "sweep":
            body = _call(client, "advance-clock", to=args.to) if args.to else _call(client, "run-sweep")
            for a in body["actions"]:
                _emit(args, a, " ".join(str(a[k]) for k in ("on", "kind", "name") if k in a))
        elif cmd == "cert":
            for f in args.files:
                data = base64.b64encode(Path(f).read_bytes()).decode("ascii")
                body = _call(client, "ingest-cert", cert=data)
                _emit(args, {"file": f, "seq": body["seq"], "kind": body["kind"]}, f"{f}: {body['kind']} at seq {body['seq']}")
    finally:
        if service is not None:
            service.close()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except UsageError as exc:
        print(f"hints: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"hints: config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HintsError, OSError) as exc:
        print(f"hints: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception as exc:  # transport failures from the HTTP client
        import httpx

        if not isinstance(exc, httpx.HTTPError):
            raise
        print(f"hints: server: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
