"""Command-line interface.

Exit codes: 0 success, 1 remote or logical failure, 2 usage, description or
I/O failure. Machine-readable output goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
from pathlib import Path

from . import __version__
from .auth import oauth2_authorize_url, oauth2_exchange_code, simple_authenticate
from .chain import ChainResult, parse_chain, run_chain
from .controller import CONFIG_ENV, Blender, default_config_dir, load_general
from .description import OAuth2Auth, load_catalog, load_document
from .errors import (
    AuthError,
    BlendError,
    CatalogIOError,
    ChainAborted,
    DuplicateServerName,
    LifecycleError,
    MalformedDocument,
    ParameterError,
    SpecErrors,
    TransportError,
)
from .policy import acquire

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("blendkit.cli")


class _Out:
    def __init__(self, args):
        self.quiet = args.quiet
        self.mode = args.output

    def line(self, text: str = "") -> None:
        if not self.quiet:
            print(text)

    def data(self, obj) -> None:
        if self.mode == "raw-envelope":
            print(json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")))
        else:
            print(json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2))


def _err(text: str) -> None:
    print(text, file=sys.stderr)


def _session(args) -> Blender:
    return Blender(args.config_dir)


def _load_failure(exc: BlendError) -> int:
    if isinstance(exc, SpecErrors):
        for e in exc.errors:
            _err(f"error: {e}")
    else:
        _err(f"error: {exc}")
    return EXIT_USAGE


# -- commands ------------------------------------------------------------------


def cmd_validate(args, out: _Out) -> int:
    config_dir = Path(args.config_dir)
    if not config_dir.is_dir():
        _err(f"error: configuration directory not found: {config_dir}")
        return EXIT_USAGE
    failed = False
    try:
        load_general(config_dir)
    except (SpecErrors, MalformedDocument) as exc:
        failed = True
        for e in getattr(exc, "errors", [exc]):
            _err(f"error: {e}")
    try:
        catalog = load_catalog(config_dir)
    except CatalogIOError as exc:
        _err(f"error: {exc}")
        return EXIT_USAGE
    except SpecErrors as exc:
        for e in exc.errors:
            _err(f"error: {e}")
        return EXIT_FAIL
    except DuplicateServerName as exc:
        _err(f"error: {exc}")
        return EXIT_FAIL
    for name in catalog.names():
        spec = catalog.get(name)
        out.line(f"ok {name} ({catalog.files.get(name)}): {len(spec.interactions)} interaction(s)")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_list(args, out: _Out) -> int:
    try:
        catalog = load_catalog(args.config_dir)
    except BlendError as exc:
        return _load_failure(exc)
    if args.output == "raw-envelope":
        out.data({s.name: s.interaction_names for s in catalog})
        return EXIT_OK
    for name in catalog.names():
        spec = catalog.get(name)
        auth = type(spec.authentication).__name__ if spec.authentication else "none"
        print(f"{name}  {spec.scheme}://{spec.host}:{spec.port}  auth={auth}")
        for inter in spec.interactions:
            params = " ".join(p.key + ("?" if p.optional else "") for p in
                              inter.request.url_parameters)
            print(f"  {inter.name:<16} {inter.request.method:<6} {inter.request.root_path}"
                  f"  {params}".rstrip())
    return EXIT_OK


def _parse_params(pairs: list[str], nulls: list[str]) -> dict:
    params: dict = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ParameterError(f"--param expects key=value, got {item!r}")
        params[key] = value
    for key in nulls:
        params[key] = None
    return params


def cmd_call(args, out: _Out) -> int:
    try:
        params = _parse_params(args.param or [], args.param_null or [])
        blender = _session(args)
        blender.load_server(args.server)
        blender.load_interaction(args.interaction)
        blender.set_parameters(params)
        result = blender.blend()
    except (ParameterError, LifecycleError, SpecErrors, MalformedDocument, CatalogIOError,
            DuplicateServerName) as exc:
        return _load_failure(exc)
    out.data(result.to_dict())
    if result.error:
        _err(f"error: {result.error['type']}: {result.error['message']}")
        return EXIT_FAIL
    return EXIT_OK


def cmd_auth(args, out: _Out) -> int:
    try:
        blender = _session(args)
        server = blender.catalog.get(args.server)
    except BlendError as exc:
        return _load_failure(exc)
    manager = blender.auth
    spec = manager.auth_spec(server)
    if spec is None:
        _err(f"error: no authentication configured for {server.name}")
        return EXIT_USAGE
    pstate = blender.policies.state(server.name)

    def gate():
        acquire(pstate, server.policy, blender.clock)

    try:
        if isinstance(spec, OAuth2Auth):
            redirect = args.redirect_uri or blender.general.redirect_uri
            state = args.state or secrets.token_urlsafe(12)
            print(oauth2_authorize_url(spec, redirect, state))
            sys.stdout.flush()
            code = args.code
            if code is None:
                _err("Open the URL above, authorize, then paste the code here:")
                code = sys.stdin.readline().strip()
            if not code:
                _err("error: no authorization code given")
                return EXIT_USAGE
            token = oauth2_exchange_code(spec, code, redirect, blender.transport,
                                         before_send=gate)
        else:
            token = simple_authenticate(spec, blender.transport,
                                        param_name=manager.token_param(server), before_send=gate)
    except (AuthError, TransportError) as exc:
        _err(f"error: {exc}")
        return EXIT_FAIL
    manager.store(server.name, token)
    out.line(f"authenticated {server.name} ({token.kind}); token cached in "
             f"{manager.cache.path}")
    return EXIT_OK


def _summary(prepared) -> str:
    if isinstance(prepared, dict):
        parts = []
        for k, v in prepared.items():
            if isinstance(v, list):
                parts.append(f"{k}: {len(v)}")
            elif isinstance(v, dict):
                parts.append(f"{k}: {{{_summary(v)}}}")
            else:
                parts.append(f"{k}: {v}")
        return ", ".join(parts)
    if isinstance(prepared, list):
        return f"{len(prepared)} item(s)"
    return "" if prepared is None else str(prepared)


def _print_chain(result: ChainResult, spec, out: _Out) -> None:
    for step, sr in zip(spec.steps, result.steps):
        line = f"{sr.id}: {len(sr.runs)} request(s), {sr.errors} error(s)"
        if step.collect:
            line += f", collected {step.collect.name}={len(result.collections.get(step.collect.name, []))}"
        out.line(line)
    # one block per element of each fanned-out collection, like the original printout
    fanned = [s.foreach for s in spec.steps if s.foreach]
    for coll in dict.fromkeys(fanned):
        for item in result.collections.get(coll, []):
            out.line(f"{coll}: {item}")
            for step, sr in zip(spec.steps, result.steps):
                if step.foreach != coll:
                    continue
                for run in sr.runs:
                    if run.item == item:
                        r = run.result
                        text = _summary(r.prepared_content) if r.ok else f"error {r.error['type']}"
                        out.line(f"\t{sr.id}: {text}")


def cmd_chain(args, out: _Out) -> int:
    try:
        blender = _session(args)
        document = load_document(Path(args.chain_file).read_bytes(), args.chain_file)
        spec = parse_chain(document, blender.catalog)
    except OSError as exc:
        _err(f"error: cannot read chain file: {exc}")
        return EXIT_USAGE
    except BlendError as exc:
        return _load_failure(exc)
    code = EXIT_OK
    try:
        result = run_chain(spec, blender)
    except ChainAborted as exc:
        _err(f"error: chain aborted: {exc}")
        result, code = exc.result, EXIT_FAIL
    if result.status == "partial":
        _err("error: some requests in the chain failed")
        code = EXIT_FAIL
    if args.save:
        Path(args.save).write_text(result.to_json() + "\n", encoding="utf-8")
    if args.output == "raw-envelope":
        out.data(result.to_dict())
    else:
        _print_chain(result, spec, out)
    return code


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config-dir", default=argparse.SUPPRESS,
                        help=f"configuration directory (default: ${CONFIG_ENV} or ./config)")
    common.add_argument("--output", choices=("pretty", "raw-envelope"), default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="blendkit", parents=[common],
                                     description="Call declaratively described HTTP APIs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("validate", parents=[common], help="check every description file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("list", parents=[common], help="list servers and interactions")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("call", parents=[common], help="run one interaction")
    p.add_argument("server")
    p.add_argument("interaction")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--param-null", action="append", metavar="KEY",
                   help="send nothing for KEY, even if it has a default")
    p.set_defaults(func=cmd_call)

    p = sub.add_parser("auth", parents=[common], help="authenticate and cache a token")
    p.add_argument("server")
    p.add_argument("--code", help="OAuth2 authorization code (read from stdin if omitted)")
    p.add_argument("--redirect-uri")
    p.add_argument("--state")
    p.set_defaults(func=cmd_auth)

    p = sub.add_parser("chain", parents=[common], help="run a chain file")
    p.add_argument("chain_file")
    p.add_argument("--save", metavar="PATH", help="write the full chain result as JSON")
    p.set_defaults(func=cmd_chain)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    args.config_dir = getattr(args, "config_dir", None) or str(default_config_dir())
    args.output = getattr(args, "output", "pretty")
    args.quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return args.func(args, _Out(args))


if __name__ == "__main__":
    sys.exit(main())
