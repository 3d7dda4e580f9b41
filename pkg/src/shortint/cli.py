"""Thin-client CLI: validates a config, sends it to the service, prints rows.

By default the request runs against an in-process instance of the service
(no server needed); --server targets a remote instance instead.  Exit
codes: 0 clean, 2 usage/config error, 3 verification error (an exact
identity or oracle check failed; with --strict, also any exceeded
envelope).
"""
from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx

from .config import EXPERIMENTS, apply_env_overrides, build_config, parse_flat_config
from .errors import UsageError

USAGE_EXIT = 2
VERIFY_EXIT = 3


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--strict", action="store_true", help="exceeded envelopes fail the run")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--cache", help="segment cache directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--server", help="remote service URL (default: in-process)")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shortint",
        description="short-interval statistics laboratory for divisor-bounded multiplicative functions",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_run_options(p)
    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8700)
    specs = sub.add_parser("specs", help="list the function-spec registry")
    specs.add_argument("--server", help="remote service URL (default: in-process)")
    return parser


def _gather_config(args) -> dict:
    raw: dict = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                raw = parse_flat_config(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    raw = apply_env_overrides(raw)
    for kv in args.set:
        if "=" not in kv:
            raise UsageError(f"--set expects KEY=VALUE, got {kv!r}")
        key, _, value = kv.partition("=")
        if key.strip().startswith("envelope."):
            raw.setdefault("envelopes", {})[key.strip()[len("envelope.") :]] = float(value)
        elif key.strip() in ("h_grid", "exponents", "t_values", "window"):
            raw[key.strip()] = [v.strip() for v in value.split(",") if v.strip()]
        else:
            raw[key.strip()] = value.strip()
    if args.threads is not None:
        raw["threads"] = args.threads
    if args.cache is not None:
        raw["cache_dir"] = args.cache
    if args.out is not None:
        raw["out_dir"] = args.out
    file_exp = raw.get("experiment")
    if file_exp and file_exp != args.command:
        raise UsageError(
            f"config file sets experiment={file_exp!r} but the subcommand is {args.command!r}"
        )
    raw["experiment"] = args.command
    return raw


async def _request(server: str | None, method: str, path: str, payload=None):
    if server:
        async with httpx.AsyncClient(base_url=server, timeout=None) as client:
            resp = await client.request(method, path, json=payload)
            return resp.status_code, resp.json()
    from .service.app import app

    transport = httpx.ASGITransport(app=app)
    async with httpx.AsyncClient(transport=transport, base_url="http://shortint", timeout=None) as client:
        resp = await client.request(method, path, json=payload)
        return resp.status_code, resp.json()


def _print_run(body: dict) -> None:
    checks = body.get("checks", [])
    width = max((len(c["name"]) for c in checks), default=10)
    for c in checks:
        val = c.get("value")
        extra = ""
        if val is not None:
            extra = f"  value={val.get('re') if isinstance(val, dict) else val}"
        if c.get("bound") is not None:
            extra += f"  bound={c['bound']}"
        if c.get("exceeded"):
            extra += "  [envelope exceeded]"
        print(f"{c['status']:>8}  {c['name']:<{width}}{extra}")
    files = body.get("files", [])
    out_dir = body.get("manifest", {}).get("config", {}).get("out_dir", "")
    if files:
        print(f"files ({out_dir}): {', '.join(files)}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0
    if args.command == "specs":
        status, body = asyncio.run(_request(args.server, "GET", "/specs"))
        if status != 200:
            print(f"error: {body}", file=sys.stderr)
            return 1
        print("registry forms:", ", ".join(body["forms"]))
        for s in body["examples"]:
            print(f"  {s['name']:<20} k={s['bound_k']} kind={s['kind']} real={s['real']}")
        return 0
    try:
        raw = _gather_config(args)
        config = build_config(raw)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    payload = {"config": json.loads(config.canonical_json()), "strict": args.strict}
    status, body = asyncio.run(_request(args.server, "POST", "/experiments/run", payload))
    if status == 200:
        _print_run(body)
        code = int(body.get("exit_code", 0))
        if code == 0:
            print("ok")
        elif code == VERIFY_EXIT:
            print("verification FAILED", file=sys.stderr)
        return code
    kind = body.get("kind", "") if isinstance(body, dict) else ""
    message = body.get("message", body) if isinstance(body, dict) else body
    if status in (400, 422) and kind != "verification":
        print(f"usage error: {message}", file=sys.stderr)
        return USAGE_EXIT
    if status == 409 or kind == "verification":
        print(f"verification error: {message}", file=sys.stderr)
        return VERIFY_EXIT
    print(f"error ({status}): {message}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
