"""API description documents: parsing, validation, canonical serialization, catalog.

A description file holds one server: its host, optional authentication and
policy objects, and the interactions it offers. Parsing collects every
violation in a document before failing so that description authors see all of
their mistakes at once.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterator, Mapping
from urllib.parse import urlsplit

from .errors import (
    CatalogIOError,
    DuplicateServerName,
    MalformedDocument,
    SpecError,
    SpecErrors,
    InvalidSchema,
    UnknownInteraction,
    UnknownServer,
    UnsupportedSchemaKeyword,
)
from .response import check_schema, split_path

log = logging.getLogger(__name__)

METHODS = ("GET", "PUT", "POST", "DELETE")
BODY_METHODS = ("PUT", "POST")
VALUE_TYPES = ("string", "integer", "number", "boolean")
FORMATS = ("json", "xml")
SCHEMES = ("http", "https")
DEFAULT_PORT = 80
DEFAULT_STATUS = 200
DEFAULT_TOKEN_PATH = "access_token"


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterSpec:
    key: str
    value_type: str
    optional: bool
    default: Any = None


@dataclass(frozen=True)
class RequestTemplate:
    root_path: str
    method: str
    raw_content: str | None = None
    url_parameters: tuple[ParameterSpec, ...] = ()

    def parameter(self, key: str) -> ParameterSpec | None:
        for p in self.url_parameters:
            if p.key == key:
                return p
        return None


@dataclass(frozen=True)
class ExtractionMapping:
    """Ordered ``target dot-path -> source dot-path`` entries."""

    entries: tuple[tuple[str, str], ...] = ()

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class ResponseSpec:
    serialization_format: str = "json"
    expected_status_code: int = DEFAULT_STATUS
    expected_schema: dict | None = field(default=None, hash=False)
    integration: ExtractionMapping | None = None


@dataclass(frozen=True)
class InteractionSpec:
    name: str
    request: RequestTemplate
    response: ResponseSpec
    description: str | None = None


@dataclass(frozen=True)
class SimpleAuth:
    request_token_url: str
    url_parameters: tuple[tuple[str, Any], ...] = ()
    token_path: str = DEFAULT_TOKEN_PATH


@dataclass(frozen=True)
class OAuth2Auth:
    consumer_key: str
    consumer_secret: str
    request_token_url: str
    access_token_url: str
    authorize_url: str

    def __repr__(self) -> str:
        return (f"OAuth2Auth(consumer_key={self.consumer_key!r}, consumer_secret='***', "
                f"authorize_url={self.authorize_url!r}, access_token_url={self.access_token_url!r})")


AuthSpec = SimpleAuth | OAuth2Auth


@dataclass(frozen=True)
class PolicySpec:
    requests_per_hour: int | None = None
    too_many_calls_response_code: int | None = None
    too_many_calls_waiting_seconds: int | None = None


@dataclass(frozen=True)
class ServerSpec:
    name: str
    host: str
    port: int = DEFAULT_PORT
    scheme: str = "http"
    authentication: AuthSpec | None = None
    policy: PolicySpec | None = None
    interactions: tuple[InteractionSpec, ...] = ()

    def interaction(self, name: str) -> InteractionSpec:
        for i in self.interactions:
            if i.name == name:
                return i
        raise UnknownInteraction(f"server {self.name!r} has no interaction {name!r}")

    @property
    def interaction_names(self) -> list[str]:
        return [i.name for i in self.interactions]


# ---------------------------------------------------------------------------
# Reading structured text
# ---------------------------------------------------------------------------


class _Object(dict):
    """dict that remembers keys which appeared more than once in the source."""

    duplicates: tuple[str, ...] = ()


def _object_pairs(pairs):
    obj = _Object()
    dups = []
    for k, v in pairs:
        if k in obj:
            dups.append(k)
        obj[k] = v
    obj.duplicates = tuple(dups)
    return obj


def load_document(text: str | bytes, source: str | None = None) -> Any:
    """Parse JSON text, keeping track of duplicate object keys."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"not UTF-8: {exc}", source=source) from exc
    try:
        return json.loads(text, object_pairs_hook=_object_pairs)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(exc.msg, exc.lineno, exc.colno, source=source) from exc


def _join(path: str, key: str | int) -> str:
    return f"{path}.{key}" if path else str(key)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_scalar(v: Any) -> bool:
    return v is None or isinstance(v, (str, int, float, bool))


def value_matches_type(value: Any, value_type: str) -> bool:
    if value_type == "string":
        return isinstance(value, str)
    if value_type == "integer":
        return _is_int(value)
    if value_type == "number":
        return _is_number(value)
    if value_type == "boolean":
        return isinstance(value, bool)
    return False


def is_absolute_uri(value: str) -> bool:
    parts = urlsplit(value)
    return parts.scheme in SCHEMES and bool(parts.netloc)


class _Checker:
    """Accumulates SpecErrors while walking one document."""

    def __init__(self, source: str | None):
        self.source = source
        self.errors: list[SpecError] = []

    def error(self, path: str, message: str) -> None:
        self.errors.append(SpecError(path, message, self.source))

    def obj(self, value: Any, path: str, allowed: tuple[str, ...]) -> bool:
        if not isinstance(value, dict):
            self.error(path, f"expected an object, got {_type_name(value)}")
            return False
        for dup in getattr(value, "duplicates", ()):
            self.error(_join(path, dup), "duplicate key")
        for key in value:
            if key not in allowed:
                self.error(_join(path, key), "unknown field")
        return True

    def field(self, obj: dict, key: str, path: str, check, expected: str, *,
              required: bool = True, default: Any = None) -> Any:
        """Return obj[key] if it passes ``check``; record an error otherwise."""
        p = _join(path, key)
        if key not in obj:
            if required:
                self.error(p, "missing required field")
            return default
        value = obj[key]
        if not check(value):
            self.error(p, f"expected {expected}, got {_type_name(value)} {_short(value)}")
            return default
        return value


def _type_name(v: Any) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, int):
        return "integer"
    if isinstance(v, float):
        return "number"
    if isinstance(v, str):
        return "string"
    if isinstance(v, list):
        return "array"
    if isinstance(v, dict):
        return "object"
    return type(v).__name__


def _short(v: Any) -> str:
    text = json.dumps(v, default=str)
    return text if len(text) <= 40 else text[:37] + "..."


def _nonempty_str(v: Any) -> bool:
    return isinstance(v, str) and v != ""


def _valid_path(v: Any) -> bool:
    return isinstance(v, str) and split_path(v) is not None


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_SERVER_FIELDS = ("name", "host", "port", "scheme", "authentication", "policy", "interactions")
_SIMPLE_FIELDS = ("request_token_url", "url_parameters", "token_path")
_OAUTH2_FIELDS = ("consumer_key", "consumer_secret", "request_token_url", "access_token_url",
                  "authorize_url")
_POLICY_FIELDS = ("requests_per_hour", "too_many_calls_response_code",
                  "too_many_calls_waiting_seconds")
_INTERACTION_FIELDS = ("name", "description", "request", "response")
_REQUEST_FIELDS = ("root_path", "method", "raw_content", "url_parameters")
_RESPONSE_FIELDS = ("expected_status_code", "serialization_format", "expected_schema",
                    "integration")


def parse_server_spec(document: str | bytes | Mapping, source: str | None = None) -> ServerSpec:
    """Parse one server description.

    ``document`` is JSON text or an already-decoded mapping. Raises
    :class:`MalformedDocument` when the text is not JSON at all and
    :class:`SpecErrors` carrying every violation otherwise.
    """
    doc = document if isinstance(document, Mapping) else load_document(document, source)
    ck = _Checker(source)
    spec = _server(ck, doc)
    if ck.errors:
        raise SpecErrors(ck.errors)
    return spec


def _server(ck: _Checker, doc: Any) -> ServerSpec | None:
    if not ck.obj(doc, "", _SERVER_FIELDS):
        return None
    name = ck.field(doc, "name", "", _nonempty_str, "non-empty string")
    host = ck.field(doc, "host", "", _valid_host, "host name without scheme or path")
    port = ck.field(doc, "port", "", lambda v: _is_int(v) and 1 <= v <= 65535,
                    "integer port 1-65535", required=False, default=DEFAULT_PORT)
    scheme = ck.field(doc, "scheme", "", lambda v: v in SCHEMES, "one of http, https",
                      required=False, default="http")
    auth = None
    if "authentication" in doc:
        auth = _auth(ck, doc["authentication"], "authentication")
    policy = None
    if "policy" in doc:
        policy = _policy(ck, doc["policy"], "policy")

    interactions: list[InteractionSpec] = []
    raw = ck.field(doc, "interactions", "", lambda v: isinstance(v, list), "array")
    seen: set[str] = set()
    for i, item in enumerate(raw or ()):
        path = _join("interactions", i)
        inter = _interaction(ck, item, path)
        name_ = item.get("name") if isinstance(item, dict) else None
        if isinstance(name_, str):
            if name_ in seen:
                ck.error(_join(path, "name"), f"duplicate interaction name {name_!r}")
            seen.add(name_)
        if inter is not None:
            interactions.append(inter)

    if ck.errors:
        return None
    return ServerSpec(name=name, host=host, port=port, scheme=scheme, authentication=auth,
                      policy=policy, interactions=tuple(interactions))


def _valid_host(v: Any) -> bool:
    return _nonempty_str(v) and not any(c in v for c in "/?#@ ") and "://" not in v


def _auth(ck: _Checker, doc: Any, path: str) -> AuthSpec | None:
    if not isinstance(doc, dict):
        ck.error(path, f"expected an object, got {_type_name(doc)}")
        return None
    oauth_only = set(_OAUTH2_FIELDS) - set(_SIMPLE_FIELDS)
    simple_only = set(_SIMPLE_FIELDS) - set(_OAUTH2_FIELDS)
    has_oauth = bool(oauth_only & doc.keys())
    has_simple = bool(simple_only & doc.keys())
    if has_oauth and has_simple:
        ck.error(path, "mixes simple and OAuth2 authentication fields; exactly one kind allowed")
        return None
    uri = lambda v: isinstance(v, str) and is_absolute_uri(v)  # noqa: E731
    if has_oauth:
        ck.obj(doc, path, _OAUTH2_FIELDS)
        vals = {k: ck.field(doc, k, path, lambda v: isinstance(v, str), "string")
                for k in ("consumer_key", "consumer_secret")}
        for k in ("request_token_url", "access_token_url", "authorize_url"):
            vals[k] = ck.field(doc, k, path, uri, "absolute http(s) URI")
        if any(v is None for v in vals.values()):
            return None
        return OAuth2Auth(**vals)

    ck.obj(doc, path, _SIMPLE_FIELDS)
    url = ck.field(doc, "request_token_url", path, uri, "absolute http(s) URI")
    params = ck.field(doc, "url_parameters", path, lambda v: isinstance(v, dict), "object",
                      required=False, default={})
    pairs = []
    for k, v in (params or {}).items():
        if not _is_scalar(v) or v is None:
            ck.error(_join(_join(path, "url_parameters"), k),
                     f"expected a scalar value, got {_type_name(v)}")
        pairs.append((k, v))
    for dup in getattr(params, "duplicates", ()):
        ck.error(_join(_join(path, "url_parameters"), dup), "duplicate key")
    token_path = ck.field(doc, "token_path", path, _valid_path, "dot-path",
                          required=False, default=DEFAULT_TOKEN_PATH)
    if url is None:
        return None
    return SimpleAuth(request_token_url=url, url_parameters=tuple(pairs),
                      token_path=token_path or DEFAULT_TOKEN_PATH)


def _policy(ck: _Checker, doc: Any, path: str) -> PolicySpec | None:
    if not ck.obj(doc, path, _POLICY_FIELDS):
        return None
    rph = ck.field(doc, "requests_per_hour", path, lambda v: _is_int(v) and v >= 1,
                   "integer >= 1", required=False)
    code = ck.field(doc, "too_many_calls_response_code", path,
                    lambda v: _is_int(v) and 100 <= v <= 599, "HTTP status code",
                    required=False)
    wait = ck.field(doc, "too_many_calls_waiting_seconds", path,
                    lambda v: _is_int(v) and v >= 0, "integer >= 0", required=False)
    if "too_many_calls_response_code" in doc and "too_many_calls_waiting_seconds" not in doc:
        ck.error(_join(path, "too_many_calls_waiting_seconds"),
                 "required when too_many_calls_response_code is set")
    return PolicySpec(rph, code, wait)


def _interaction(ck: _Checker, doc: Any, path: str) -> InteractionSpec | None:
    if not ck.obj(doc, path, _INTERACTION_FIELDS):
        return None
    n = len(ck.errors)
    name = ck.field(doc, "name", path, _nonempty_str, "non-empty string")
    description = ck.field(doc, "description", path, lambda v: isinstance(v, str), "string",
                           required=False)
    request = None
    if "request" in doc:
        request = _request(ck, doc["request"], _join(path, "request"))
    else:
        ck.error(_join(path, "request"), "missing required field")
    response = None
    if "response" in doc:
        response = _response(ck, doc["response"], _join(path, "response"))
    else:
        ck.error(_join(path, "response"), "missing required field")
    if len(ck.errors) > n or name is None:
        return None
    return InteractionSpec(name=name, description=description, request=request,
                           response=response)


def _request(ck: _Checker, doc: Any, path: str) -> RequestTemplate | None:
    if not ck.obj(doc, path, _REQUEST_FIELDS):
        return None
    n = len(ck.errors)
    root = ck.field(doc, "root_path", path, lambda v: isinstance(v, str) and v.startswith("/"),
                    "URL path starting with '/'")
    method = ck.field(doc, "method", path, lambda v: v in METHODS, "one of GET, PUT, POST, DELETE")
    raw = ck.field(doc, "raw_content", path, lambda v: isinstance(v, str), "string",
                   required=False)
    if "raw_content" in doc and method in ("GET", "DELETE"):
        ck.error(_join(path, "raw_content"), f"raw_content is only allowed for PUT and POST, "
                                              f"not {method}")
    plist = ck.field(doc, "url_parameters", path, lambda v: isinstance(v, list), "array",
                     required=False, default=[])
    params = []
    keys: set[str] = set()
    for i, item in enumerate(plist or ()):
        ppath = _join(_join(path, "url_parameters"), i)
        p = _parameter(ck, item, ppath)
        if p is None:
            continue
        if p.key in keys:
            ck.error(_join(ppath, 0), f"duplicate parameter key {p.key!r}")
        keys.add(p.key)
        params.append(p)
    if len(ck.errors) > n:
        return None
    return RequestTemplate(root_path=root, method=method, raw_content=raw,
                           url_parameters=tuple(params))


def _parameter(ck: _Checker, item: Any, path: str) -> ParameterSpec | None:
    if not isinstance(item, list) or len(item) != 4:
        ck.error(path, "expected a 4-element array [key, type, optional, default], got "
                       f"{_type_name(item)} {_short(item)}")
        return None
    key, vtype, optional, default = item
    ok = True
    if not _nonempty_str(key):
        ck.error(_join(path, 0), f"parameter key must be a non-empty string, got {_short(key)}")
        ok = False
    if vtype not in VALUE_TYPES:
        ck.error(_join(path, 1), f"unknown parameter type {_short(vtype)}; expected one of "
                                 f"{', '.join(VALUE_TYPES)}")
        ok = False
    if not isinstance(optional, bool):
        ck.error(_join(path, 2), f"optional flag must be a boolean, got {_short(optional)}")
        ok = False
    if default is not None and vtype in VALUE_TYPES and not value_matches_type(default, vtype):
        ck.error(_join(path, 3), f"default {_short(default)} is not a valid {vtype}")
        ok = False
    elif default is not None and not _is_scalar(default):
        ck.error(_join(path, 3), "default must be a scalar or null")
        ok = False
    return ParameterSpec(key, vtype, optional, default) if ok else None


def _response(ck: _Checker, doc: Any, path: str) -> ResponseSpec | None:
    if not ck.obj(doc, path, _RESPONSE_FIELDS):
        return None
    n = len(ck.errors)
    code = ck.field(doc, "expected_status_code", path,
                    lambda v: _is_int(v) and 100 <= v <= 599, "HTTP status code",
                    required=False, default=DEFAULT_STATUS)
    fmt = ck.field(doc, "serialization_format", path,
                   lambda v: isinstance(v, str) and v.lower() in FORMATS, "one of json, xml")
    schema = ck.field(doc, "expected_schema", path, lambda v: isinstance(v, dict), "object",
                      required=False)
    if schema is not None:
        try:
            check_schema(schema)
        except UnsupportedSchemaKeyword as exc:
            spath = _join(path, "expected_schema")
            ck.error(_join(spath, exc.path) if exc.path else spath, str(exc))
        except InvalidSchema as exc:
            ck.error(_join(path, "expected_schema"), str(exc))
    mapping = None
    if "integration" in doc:
        mapping = _mapping(ck, doc["integration"], _join(path, "integration"))
    if len(ck.errors) > n:
        return None
    return ResponseSpec(serialization_format=fmt.lower(), expected_status_code=code,
                        expected_schema=_plain(schema) if schema is not None else None,
                        integration=mapping)


def _mapping(ck: _Checker, doc: Any, path: str) -> ExtractionMapping | None:
    if not isinstance(doc, dict):
        ck.error(path, f"expected an object, got {_type_name(doc)}")
        return None
    for dup in getattr(doc, "duplicates", ()):
        ck.error(_join(path, dup), "duplicate target path")
    entries = []
    for target, src in doc.items():
        tpath = f"{path}[{target}]"
        if split_path(target) is None:
            ck.error(tpath, "target is not a valid dot-path")
            continue
        if not _valid_path(src):
            ck.error(tpath, f"source {_short(src)} is not a valid dot-path")
            continue
        entries.append((target, src))
    targets = [tuple(split_path(t)) for t, _ in entries]
    for a in targets:
        for b in targets:
            if len(a) < len(b) and b[:len(a)] == a:
                ck.error(f"{path}[{'.'.join(b)}]",
                         f"target path is nested under another target {'.'.join(a)!r}")
    return ExtractionMapping(tuple(entries))


def _plain(tree: Any) -> Any:
    """Strip the duplicate-tracking dict subclass."""
    if isinstance(tree, dict):
        return {k: _plain(v) for k, v in tree.items()}
    if isinstance(tree, list):
        return [_plain(v) for v in tree]
    return tree


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------


def _sorted_tree(tree: Any) -> Any:
    if isinstance(tree, dict):
        return {k: _sorted_tree(tree[k]) for k in sorted(tree)}
    if isinstance(tree, list):
        return [_sorted_tree(v) for v in tree]
    return tree


def _ordered(d: dict) -> dict:
    return {k: d[k] for k in sorted(d)}


def server_to_document(spec: ServerSpec) -> dict:
    """Plain-data form of ``spec`` with defaults written out explicitly.

    Fields of description objects come out in alphabetical order; user data
    whose order is meaningful (extraction entries, simple-auth parameters)
    keeps declaration order.
    """
    doc: dict[str, Any] = {
        "name": spec.name,
        "host": spec.host,
        "port": spec.port,
        "scheme": spec.scheme,
        "interactions": [_interaction_doc(i) for i in spec.interactions],
    }
    if spec.authentication is not None:
        doc["authentication"] = _auth_doc(spec.authentication)
    if spec.policy is not None:
        doc["policy"] = _ordered({k: getattr(spec.policy, k) for k in _POLICY_FIELDS
                                  if getattr(spec.policy, k) is not None})
    return _ordered(doc)


def _auth_doc(auth: AuthSpec) -> dict:
    if isinstance(auth, OAuth2Auth):
        return _ordered({k: getattr(auth, k) for k in _OAUTH2_FIELDS})
    return _ordered({
        "request_token_url": auth.request_token_url,
        "url_parameters": dict(auth.url_parameters),
        "token_path": auth.token_path,
    })


def _interaction_doc(inter: InteractionSpec) -> dict:
    req = inter.request
    rdoc: dict[str, Any] = {
        "root_path": req.root_path,
        "method": req.method,
        "url_parameters": [[p.key, p.value_type, p.optional, p.default]
                           for p in req.url_parameters],
    }
    if req.raw_content is not None:
        rdoc["raw_content"] = req.raw_content
    resp = inter.response
    sdoc: dict[str, Any] = {
        "expected_status_code": resp.expected_status_code,
        "serialization_format": resp.serialization_format,
    }
    if resp.expected_schema is not None:
        sdoc["expected_schema"] = _sorted_tree(resp.expected_schema)
    if resp.integration is not None:
        sdoc["integration"] = dict(resp.integration.entries)
    doc: dict[str, Any] = {"name": inter.name, "request": _ordered(rdoc),
                           "response": _ordered(sdoc)}
    if inter.description is not None:
        doc["description"] = inter.description
    return _ordered(doc)


def serialize_server_spec(spec: ServerSpec) -> str:
    return json.dumps(server_to_document(spec), indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Catalog:
    servers: Mapping[str, ServerSpec]
    source_directory: Path | None = None
    files: Mapping[str, Path] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "servers", MappingProxyType(dict(self.servers)))
        object.__setattr__(self, "files", MappingProxyType(dict(self.files)))
        for key, spec in self.servers.items():
            if key != spec.name:
                raise ValueError(f"catalog key {key!r} does not match server name {spec.name!r}")

    @classmethod
    def from_specs(cls, specs, source_directory: Path | None = None) -> "Catalog":
        servers: dict[str, ServerSpec] = {}
        for s in specs:
            if s.name in servers:
                raise DuplicateServerName(s.name, ["<memory>", "<memory>"])
            servers[s.name] = s
        return cls(servers, source_directory)

    def get(self, name: str) -> ServerSpec:
        try:
            return self.servers[name]
        except KeyError:
            raise UnknownServer(f"no server named {name!r} in catalog") from None

    def __contains__(self, name: object) -> bool:
        return name in self.servers

    def __len__(self) -> int:
        return len(self.servers)

    def __iter__(self) -> Iterator[ServerSpec]:
        return iter(self.servers.values())

    def names(self) -> list[str]:
        return sorted(self.servers)


def load_catalog(directory: str | Path) -> Catalog:
    """Load every ``apis/*.json`` description below ``directory``.

    Errors from all files are aggregated into one :class:`SpecErrors`.
    """
    directory = Path(directory)
    apis = directory / "apis"
    if not directory.is_dir():
        raise CatalogIOError(f"configuration directory not found: {directory}")
    if not apis.exists():
        return Catalog({}, directory)
    if not apis.is_dir():
        raise CatalogIOError(f"not a directory: {apis}")

    errors: list[SpecError] = []
    by_name: dict[str, list[Path]] = {}
    specs: dict[str, ServerSpec] = {}
    for path in sorted(apis.glob("*.json")):
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise CatalogIOError(f"cannot read {path}: {exc}") from exc
        try:
            spec = parse_server_spec(text, source=str(path))
        except MalformedDocument as exc:
            errors.append(SpecError("", f"malformed document: {exc}", str(path)))
            continue
        except SpecErrors as exc:
            errors.extend(exc.errors)
            continue
        by_name.setdefault(spec.name, []).append(path)
        specs.setdefault(spec.name, spec)
    if errors:
        raise SpecErrors(errors)
    for name, paths in by_name.items():
        if len(paths) > 1:
            raise DuplicateServerName(name, [str(p) for p in paths])
    log.debug("loaded %d server description(s) from %s", len(specs), apis)
    return Catalog(specs, directory, {n: p[0] for n, p in by_name.items()})
