"""Command line: ``tilesim run | serve | derive | attack``."""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
from pathlib import Path

from . import crypto, scenario
from .server import ApiApp, TileServer, make_http_server

log = logging.getLogger("tilesim")

# scenario that exercises each attack when `attack <id>` is given no --scenario
DEFAULT_ATTACK_SCENARIOS = {
    "a1": "surveillance-day",
    "a2": "community-locate",
    "a3": "static-mac-week",
    "a4": "cycle-fingerprint-91d",
    "a5": "revoked-sharer-tracking",
    "a6": "derive-frame",
    "a7": "replay-frame",
    "a8": "antitheft-circumvention",
}


def _hex(n: int | None):
    def parse(text: str) -> bytes:
        try:
            value = bytes.fromhex(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a hex string: {text!r}") from None
        if n is not None and len(value) != n:
            raise argparse.ArgumentTypeError(f"expected {n} bytes, got {len(value)}")
        return value

    return parse


def _dump(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _load_scenario(ref: str) -> scenario.Scenario:
    return scenario.Scenario.load(scenario.resolve(ref))


def cmd_run(args) -> int:
    if args.list:
        print("\n".join(scenario.bundled_names()))
        return 0
    if not args.scenario:
        print("error: --scenario is required", file=sys.stderr)
        return scenario.EXIT_SCHEMA
    try:
        sc = _load_scenario(args.scenario)
    except (scenario.ScenarioError, OSError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return scenario.EXIT_SCHEMA
    result = scenario.run(sc, args.seed)
    if args.snapshot_out:
        result.server.save(args.snapshot_out)
    if args.log_out:
        Path(args.log_out).write_text(result.world.log.to_jsonl())
    _dump(result.report, args.report_out)
    for check in result.report["assertions"]:
        if not check["passed"]:
            print(f"assertion failed: {json.dumps(check, sort_keys=True)}", file=sys.stderr)
    return result.exit_code


def cmd_attack(args) -> int:
    ref = args.scenario or DEFAULT_ATTACK_SCENARIOS[args.attack_id]
    try:
        sc = _load_scenario(ref)
    except (scenario.ScenarioError, OSError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return scenario.EXIT_SCHEMA
    if not any(a["id"] == args.attack_id for a in sc.attacks):
        print(f"scenario {sc.name!r} does not configure attack {args.attack_id}", file=sys.stderr)
        return scenario.EXIT_SCHEMA
    result = scenario.run(sc, args.seed)
    verdict = next(v for v in result.report["verdicts"] if v["attack"] == args.attack_id)
    if args.snapshot_out:
        result.server.save(args.snapshot_out)
    _dump(verdict, args.report_out)
    return 0 if verdict["success"] else 1


def cmd_derive(args) -> int:
    try:
        if args.all:
            ids = crypto.private_id_schedule(args.auth_key, args.tile_id)
        elif args.ctr is not None:
            ids = [crypto.private_id(crypto.derive_private_id_seed(args.auth_key, args.tile_id), args.ctr)]
        else:
            ids = [crypto.private_id_at(args.auth_key, args.tile_id, args.activation, args.time)]
    except crypto.CryptoArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write("".join(pid.hex() + "\n" for pid in ids))
    return 0


def cmd_serve(args) -> int:
    server = TileServer.load(args.snapshot_in) if args.snapshot_in else TileServer()
    try:
        httpd = make_http_server(ApiApp(server), args.host, args.port)
    except OSError as exc:
        print(f"error: cannot listen on {args.host}:{args.port}: {exc.strerror or exc}", file=sys.stderr)
        return 1

    def stop(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, stop)
    host, port = httpd.server_address[:2]
    print(f"listening on http://{host}:{port}", flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
        if args.snapshot_out:
            server.save(args.snapshot_out)
            print(f"snapshot written to {args.snapshot_out}", flush=True)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tilesim", description="Tile offline-finding simulator and attack suite.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and print its report")
    run.add_argument("--scenario", help="scenario file or bundled scenario name")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--report-out")
    run.add_argument("--snapshot-out")
    run.add_argument("--log-out", help="write the JSON-lines event log here")
    run.add_argument("--list", action="store_true", help="list bundled scenarios")
    run.set_defaults(func=cmd_run)

    attack = sub.add_parser("attack", help="run one attack and print its verdict")
    attack.add_argument("attack_id", choices=sorted(DEFAULT_ATTACK_SCENARIOS))
    attack.add_argument("--scenario")
    attack.add_argument("--seed", type=int)
    attack.add_argument("--report-out")
    attack.add_argument("--snapshot-out")
    attack.set_defaults(func=cmd_attack)

    derive = sub.add_parser("derive", help="compute privateIds from an authKey")
    derive.add_argument("--auth-key", type=_hex(crypto.KEY_LEN), required=True)
    derive.add_argument("--tile-id", type=_hex(crypto.TILE_ID_LEN), required=True)
    which = derive.add_mutually_exclusive_group(required=True)
    which.add_argument("--ctr", type=int)
    which.add_argument("--time", type=float, help="seconds on the same clock as --activation")
    which.add_argument("--all", action="store_true", help="print the full 8640-entry schedule")
    derive.add_argument("--activation", type=float, default=0.0)
    derive.set_defaults(func=cmd_derive)

    serve = sub.add_parser("serve", help="run the provider API over HTTP")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--snapshot-out", help="save state here on shutdown")
    serve.add_argument("--snapshot-in", help="start from a saved snapshot")
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
