"""The Blender session: load a server, pick an interaction, set parameters, blend."""

from __future__ import annotations

import base64
import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from .auth import AuthManager, NoAuth, TokenCache, apply_auth, redact, secrets_of
from .description import Catalog, load_catalog, load_document
from .errors import (
    BlendError,
    NoInteractionLoaded,
    NoServerLoaded,
    SpecError,
    SpecErrors,
)
from .policy import DEFAULT_MAX_PROBES, Clock, PolicyRegistry, SystemClock, acquire, await_and_retry
from .request import build_request, resolve_parameters
from .response import check_status, deserialize, extract, validate
from .transport import HttpResponse, HttpTransport, UrllibTransport

log = logging.getLogger(__name__)

CONFIG_ENV = "BLENDKIT_CONFIG_DIR"
DEFAULT_USER_AGENT = "blendkit/0.1"
OOB_REDIRECT = "urn:ietf:wg:oauth:2.0:oob"


def default_config_dir() -> Path:
    return Path(os.environ.get(CONFIG_ENV) or "config")


# ---------------------------------------------------------------------------
# general.json
# ---------------------------------------------------------------------------

_GENERAL_FIELDS = ("credentials_file", "max_probes", "transport_timeout_seconds", "user_agent",
                   "redirect_uri", "servers")


@dataclass(frozen=True)
class GeneralConfig:
    credentials_file: Path | None = None
    max_probes: int = DEFAULT_MAX_PROBES
    transport_timeout_seconds: float = 30.0
    user_agent: str = DEFAULT_USER_AGENT
    redirect_uri: str = OOB_REDIRECT
    # per-server credentials and overrides: consumer_key, consumer_secret,
    # url_parameters, token_param
    servers: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)


def load_general(config_dir: str | Path) -> GeneralConfig:
    """Read ``general.json``; absent file means all defaults."""
    config_dir = Path(config_dir)
    path = config_dir / "general.json"
    default_creds = config_dir / "credentials.json"
    if not path.exists():
        return GeneralConfig(credentials_file=default_creds)
    src = str(path)
    doc = load_document(path.read_bytes(), src)
    errors = []

    def bad(key, msg):
        errors.append(SpecError(key, msg, src))

    if not isinstance(doc, dict):
        raise SpecErrors([SpecError("", "expected an object", src)])
    for key in doc:
        if key not in _GENERAL_FIELDS:
            bad(key, "unknown field")
    creds = doc.get("credentials_file", None)
    if creds is not None and not isinstance(creds, str):
        bad("credentials_file", "expected a path string")
    probes = doc.get("max_probes", DEFAULT_MAX_PROBES)
    if not isinstance(probes, int) or isinstance(probes, bool) or probes < 1:
        bad("max_probes", "expected an integer >= 1")
    timeout = doc.get("transport_timeout_seconds", 30)
    if isinstance(timeout, bool) or not isinstance(timeout, (int, float)) or timeout <= 0:
        bad("transport_timeout_seconds", "expected a positive number")
    for key in ("user_agent", "redirect_uri"):
        if key in doc and not isinstance(doc[key], str):
            bad(key, "expected a string")
    servers = doc.get("servers", {})
    if not isinstance(servers, dict) or not all(isinstance(v, dict) for v in servers.values()):
        bad("servers", "expected an object of per-server objects")
    if errors:
        raise SpecErrors(errors)
    creds_path = default_creds if creds is None else Path(creds)
    if not creds_path.is_absolute():
        creds_path = config_dir / creds_path
    return GeneralConfig(
        credentials_file=creds_path,
        max_probes=probes,
        transport_timeout_seconds=float(timeout),
        user_agent=doc.get("user_agent", DEFAULT_USER_AGENT),
        redirect_uri=doc.get("redirect_uri", OOB_REDIRECT),
        servers={k: dict(v) for k, v in servers.items()},
    )


# ---------------------------------------------------------------------------
# envelope
# ---------------------------------------------------------------------------


def _redact_tree(tree: Any, secrets: list[str]) -> Any:
    if not secrets:
        return tree
    if isinstance(tree, str):
        return redact(tree, secrets)
    if isinstance(tree, dict):
        return {redact(k, secrets): _redact_tree(v, secrets) for k, v in tree.items()}
    if isinstance(tree, list):
        return [_redact_tree(v, secrets) for v in tree]
    return tree


ENVELOPE_FIELDS = ("server_name", "interaction_name", "request_summary", "status_code", "headers",
                   "raw_content", "parsed_content", "prepared_content", "schema_violations",
                   "missing_extraction_paths", "timing", "error")


@dataclass
class BlendResult:
    server_name: str
    interaction_name: str
    request_summary: dict = field(default_factory=dict)
    status_code: int | None = None
    headers: list = field(default_factory=list)
    raw_content: bytes = b""
    parsed_content: Any = None
    prepared_content: Any = None
    schema_violations: list = field(default_factory=list)
    missing_extraction_paths: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    error: dict | None = None
    _secrets: list = field(default_factory=list, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def __getitem__(self, key: str) -> Any:
        # dictionary-style access, e.g. result["prepared_content"]["results"]
        if key not in ENVELOPE_FIELDS:
            raise KeyError(key)
        return getattr(self, key)

    def to_dict(self) -> dict:
        try:
            raw, encoding = self.raw_content.decode("utf-8"), "utf-8"
        except UnicodeDecodeError:
            raw, encoding = base64.b64encode(self.raw_content).decode("ascii"), "base64"
        d = {
            "server_name": self.server_name,
            "interaction_name": self.interaction_name,
            "request_summary": self.request_summary,
            "status_code": self.status_code,
            "headers": [list(h) for h in self.headers],
            "raw_content": raw,
            "raw_content_encoding": encoding,
            "parsed_content": self.parsed_content,
            "prepared_content": self.prepared_content,
            "schema_violations": list(self.schema_violations),
            "missing_extraction_paths": list(self.missing_extraction_paths),
            "timing": self.timing,
            "error": self.error,
        }
        return _redact_tree(d, self._secrets)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: Mapping) -> "BlendResult":
        raw = d.get("raw_content") or ""
        if d.get("raw_content_encoding") == "base64":
            body = base64.b64decode(raw)
        else:
            body = raw.encode("utf-8")
        return cls(
            server_name=d["server_name"],
            interaction_name=d["interaction_name"],
            request_summary=dict(d.get("request_summary") or {}),
            status_code=d.get("status_code"),
            headers=[tuple(h) for h in d.get("headers") or []],
            raw_content=body,
            parsed_content=d.get("parsed_content"),
            prepared_content=d.get("prepared_content"),
            schema_violations=list(d.get("schema_violations") or []),
            missing_extraction_paths=list(d.get("missing_extraction_paths") or []),
            timing=dict(d.get("timing") or {}),
            error=d.get("error"),
        )


# ---------------------------------------------------------------------------
# session
# ---------------------------------------------------------------------------


class Blender:
    """One client session over a catalog of server descriptions.

    Usage mirrors a script talking to several APIs in turn::

        blender = Blender("config")
        blender.load_server("twitter-search")
        blender.load_interaction("search")
        blender.set_parameters({"q": "good spirit", "page": 1})
        result = blender.blend()
        result["prepared_content"]["results"]

    A session is not thread-safe; run one per thread. Sessions built with the
    same ``policies`` registry and ``auth`` manager share counters and tokens.
    """

    def __init__(self, config_dir: str | Path | None = None, *,
                 catalog: Catalog | None = None,
                 general: GeneralConfig | None = None,
                 transport: HttpTransport | None = None,
                 clock: Clock | None = None,
                 policies: PolicyRegistry | None = None,
                 auth: AuthManager | None = None):
        if catalog is None:
            config_dir = Path(config_dir) if config_dir is not None else default_config_dir()
            catalog = load_catalog(config_dir)
        self.config_dir = Path(config_dir) if config_dir is not None else catalog.source_directory
        if general is None:
            general = load_general(self.config_dir) if self.config_dir else GeneralConfig()
        self.catalog = catalog
        self.general = general
        self.transport = transport or UrllibTransport(general.transport_timeout_seconds)
        self.clock = clock or SystemClock()
        self.policies = policies or PolicyRegistry()
        self.auth = auth or AuthManager(self.transport, TokenCache(general.credentials_file),
                                        general.servers)
        self.current_server: str | None = None
        self.current_interaction: str | None = None
        self.pending_parameters: dict[str, Any] = {}

    # -- lifecycle ---------------------------------------------------------

    def load_server(self, name: str) -> None:
        self.catalog.get(name)
        self.current_server = name
        self.current_interaction = None
        self.pending_parameters = {}

    def load_interaction(self, name: str) -> None:
        if self.current_server is None:
            raise NoServerLoaded("load a server before choosing an interaction")
        self.catalog.get(self.current_server).interaction(name)
        self.current_interaction = name
        self.pending_parameters = {}

    def set_parameters(self, params: Mapping[str, Any] | None) -> None:
        if self.current_interaction is None:
            raise NoInteractionLoaded("load an interaction before setting parameters")
        self.pending_parameters = dict(params or {})

    # -- the pipeline ------------------------------------------------------

    def blend(self) -> BlendResult:
        """Run one request and return its envelope.

        Remote-side failures (transport, auth, policy, status, decoding) are
        recorded in ``result.error``. Bad parameters raise before anything is
        sent and leave the session untouched.
        """
        if self.current_interaction is None:
            raise NoInteractionLoaded("load an interaction before blending")
        server = self.catalog.get(self.current_server)
        inter = server.interaction(self.current_interaction)
        params = resolve_parameters(inter.request, self.pending_parameters)
        self.pending_parameters = {}

        result = BlendResult(server.name, inter.name)
        started = datetime.now(timezone.utc)
        t0 = self.clock.now()
        pstate = self.policies.state(server.name)

        def gate():
            acquire(pstate, server.policy, self.clock)

        base = build_request(server, inter, params, self.general.user_agent)
        result.request_summary = {"method": base.method, "url": base.url}
        last: list[HttpResponse] = []

        def send(request) -> int:
            resp = self.transport.send(request)
            last.append(resp)
            return resp.status

        def send_under_policy(request):
            return await_and_retry(pstate, server.policy, self.clock, lambda: send(request),
                                   self.general.max_probes)

        try:
            state = self.auth.state_for(server, before_send=gate)
            result._secrets = secrets_of(state)
            request = apply_auth(base, state)
            result.request_summary["url"] = redact(request.url, result._secrets)
            try:
                status = send_under_policy(request)
                if status == 401 and not isinstance(state, NoAuth):
                    log.info("%s answered 401, re-authenticating", server.name)
                    self.auth.invalidate(server.name)
                    state = self.auth.state_for(server, before_send=gate)
                    result._secrets = result._secrets + secrets_of(state)
                    request = apply_auth(base, state)
                    result.request_summary["url"] = redact(request.url, result._secrets)
                    send_under_policy(request)
            finally:
                if last:
                    resp = last[-1]
                    result.status_code = resp.status
                    result.headers = list(resp.headers)
                    result.raw_content = resp.body
            self._process(result, inter)
        except BlendError as exc:
            result.error = exc.to_dict()
            log.info("blend %s/%s failed: %s", server.name, inter.name,
                     redact(str(exc), result._secrets))
        finally:
            result.timing = {"started_at": started.isoformat(),
                             "elapsed_ms": round((self.clock.now() - t0) * 1000.0, 3)}
        return result

    @staticmethod
    def _process(result: BlendResult, inter) -> None:
        spec = inter.response
        mismatch = check_status(result.status_code, spec.expected_status_code)
        if mismatch is not None:
            raise mismatch
        parsed = deserialize(result.raw_content, spec.serialization_format)
        result.parsed_content = parsed
        if spec.expected_schema is not None:
            result.schema_violations = [v.to_dict() for v in validate(parsed, spec.expected_schema)]
        if spec.integration is not None:
            record, missing = extract(parsed, spec.integration)
            result.prepared_content = record
            result.missing_extraction_paths = missing
        else:
            result.prepared_content = parsed

    def call(self, server: str, interaction: str,
             params: Mapping[str, Any] | None = None) -> BlendResult:
        """load_server + load_interaction + set_parameters + blend in one go."""
        if server != self.current_server:
            self.load_server(server)
        self.load_interaction(interaction)
        self.set_parameters(params)
        return self.blend()

