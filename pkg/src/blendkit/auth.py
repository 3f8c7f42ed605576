"""Simple (single URL) and OAuth2 authorization-code authentication.

Tokens obtained here are cached per server, both in memory and in a
credentials file, and applied to outbound requests either as an extra query
parameter or as a bearer ``Authorization`` header.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Mapping
from urllib.parse import parse_qsl

from .description import OAuth2Auth, ServerSpec, SimpleAuth
from .errors import AuthRejected, AuthRequired, TokenNotFound
from .request import (
    PreparedRequest,
    encode_query,
    percent_encode,
    with_header,
    with_query_param,
)
from .response import MISSING, dot_get, split_path
from .transport import HttpTransport, HttpResponse

log = logging.getLogger(__name__)

REDACTED = "***"


@dataclass(frozen=True)
class NoAuth:
    kind = "none"


@dataclass(frozen=True)
class QueryToken:
    param_name: str
    token: str
    kind = "query_token"

    def __repr__(self) -> str:
        return f"QueryToken(param_name={self.param_name!r}, token={REDACTED!r})"


@dataclass(frozen=True)
class Bearer:
    token: str
    expires_at: float | None = None
    kind = "bearer"

    def __repr__(self) -> str:
        return f"Bearer(token={REDACTED!r}, expires_at={self.expires_at!r})"

    def expired(self, now: float) -> bool:
        return self.expires_at is not None and self.expires_at <= now


AuthState = NoAuth | QueryToken | Bearer


def secrets_of(state: AuthState) -> list[str]:
    token = getattr(state, "token", "")
    return [token] if token else []


def redact(text: str, secrets) -> str:
    """Replace every secret (and its percent-encoded form) in ``text``."""
    for s in secrets:
        if not s:
            continue
        text = text.replace(s, REDACTED)
        enc = percent_encode(s)
        if enc != s:
            text = text.replace(enc, REDACTED)
    return text


def default_param_name(spec: SimpleAuth) -> str:
    return split_path(spec.token_path)[-1]


def _structured(body: bytes, content_type: str | None) -> Any:
    text = body.decode("utf-8", errors="replace").strip()
    if content_type and "x-www-form-urlencoded" in content_type:
        return dict(parse_qsl(text))
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "=" in text and not text.startswith(("{", "[", "<")):
        return dict(parse_qsl(text))
    return None


def _token_from(resp: HttpResponse, path: str) -> Any:
    tree = _structured(resp.body, resp.header("Content-Type"))
    token = dot_get(tree, path) if isinstance(tree, dict) else MISSING
    if token is MISSING or token is None or isinstance(token, (dict, list, bool)):
        raise TokenNotFound(f"no token at {path!r} in authentication response")
    return tree, str(token)


def simple_authenticate(spec: SimpleAuth, transport: HttpTransport, *,
                        param_name: str | None = None,
                        before_send: Callable[[], None] | None = None) -> QueryToken:
    """Exchange the configured URL parameters for a token with one GET."""
    url = spec.request_token_url
    query = encode_query(spec.url_parameters)
    if query:
        url += ("&" if "?" in url else "?") + query
    req = PreparedRequest("GET", url, (("Accept", "application/json"),))
    if before_send:
        before_send()
    resp = transport.send(req)
    if not 200 <= resp.status < 300:
        raise AuthRejected(f"token endpoint answered {resp.status}", resp.status)
    _, token = _token_from(resp, spec.token_path)
    return QueryToken(param_name or default_param_name(spec), token)


def oauth2_authorize_url(spec: OAuth2Auth, redirect_uri: str, state: str) -> str:
    query = encode_query([("response_type", "code"), ("client_id", spec.consumer_key),
                          ("redirect_uri", redirect_uri), ("state", state)])
    sep = "&" if "?" in spec.authorize_url else "?"
    return spec.authorize_url + sep + query


def oauth2_exchange_code(spec: OAuth2Auth, code: str, redirect_uri: str,
                         transport: HttpTransport, *, now: float | None = None,
                         before_send: Callable[[], None] | None = None) -> Bearer:
    """Trade an authorization code for a bearer token.

    The client secret travels only in the form-encoded POST body.
    """
    form = encode_query([("grant_type", "authorization_code"), ("code", code),
                         ("redirect_uri", redirect_uri), ("client_id", spec.consumer_key),
                         ("client_secret", spec.consumer_secret)])
    req = PreparedRequest(
        "POST", spec.access_token_url,
        (("Content-Type", "application/x-www-form-urlencoded"), ("Accept", "application/json")),
        form.encode("ascii"))
    if before_send:
        before_send()
    resp = transport.send(req)
    if not 200 <= resp.status < 300:
        raise AuthRejected(f"token endpoint answered {resp.status}", resp.status)
    tree, token = _token_from(resp, "access_token")
    expires_at = None
    lifetime = tree.get("expires_in", tree.get("expires"))
    if lifetime is not None:
        try:
            seconds = float(lifetime)
        except (TypeError, ValueError):
            seconds = None
        if seconds is not None:
            expires_at = (time.time() if now is None else now) + seconds
    return Bearer(token, expires_at)


def apply_auth(request: PreparedRequest, state: AuthState) -> PreparedRequest:
    if isinstance(state, QueryToken):
        pair = f"{percent_encode(state.param_name)}={percent_encode(state.token)}"
        query = request.url.split("?", 1)[1] if "?" in request.url else ""
        if pair in query.split("&"):
            return request
        return with_query_param(request, state.param_name, state.token)
    if isinstance(state, Bearer):
        return with_header(request, "Authorization", f"Bearer {state.token}")
    return request


def with_credentials(auth, overrides: Mapping[str, Any] | None):
    """Fill consumer credentials / simple-auth parameters from general config."""
    if not overrides or auth is None:
        return auth
    if isinstance(auth, OAuth2Auth):
        changes = {k: overrides[k] for k in ("consumer_key", "consumer_secret") if k in overrides}
        return replace(auth, **changes)
    if "url_parameters" in overrides:
        merged = dict(auth.url_parameters)
        merged.update(overrides["url_parameters"])
        return replace(auth, url_parameters=tuple(merged.items()))
    return auth


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def state_to_dict(state: AuthState) -> dict:
    if isinstance(state, QueryToken):
        return {"kind": state.kind, "token": state.token, "param_name": state.param_name,
                "expires_at": None}
    if isinstance(state, Bearer):
        return {"kind": state.kind, "token": state.token, "expires_at": state.expires_at}
    return {"kind": "none"}


def state_from_dict(d: Mapping) -> AuthState:
    kind = d.get("kind")
    if kind == "query_token":
        return QueryToken(d.get("param_name") or "access_token", d["token"])
    if kind == "bearer":
        return Bearer(d["token"], d.get("expires_at"))
    return NoAuth()


class TokenCache:
    """Credentials file mapping server name to its cached token. Single writer."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()

    def _read(self) -> dict:
        if self.path is None or not self.path.exists():
            return {}
        try:
            data = json.loads(self.path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            log.warning("ignoring unreadable credentials file %s", self.path)
            return {}
        return data if isinstance(data, dict) else {}

    def get(self, server_name: str) -> AuthState | None:
        with self._lock:
            entry = self._read().get(server_name)
        return state_from_dict(entry) if isinstance(entry, dict) else None

    def put(self, server_name: str, state: AuthState) -> None:
        if self.path is None:
            return
        with self._lock:
            data = self._read()
            data[server_name] = state_to_dict(state)
            self._write(data)

    def delete(self, server_name: str) -> None:
        if self.path is None:
            return
        with self._lock:
            data = self._read()
            if data.pop(server_name, None) is not None:
                self._write(data)

    def _write(self, data: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".credentials-")
        try:
            os.fchmod(fd, 0o600)
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(data, fh, indent=2, sort_keys=True)
            os.replace(tmp, self.path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class AuthManager:
    """Hands out a usable AuthState per server, authenticating at most once at a time."""

    def __init__(self, transport: HttpTransport, cache: TokenCache | None = None,
                 server_overrides: Mapping[str, Mapping] | None = None,
                 wall: Callable[[], float] = time.time):
        self.transport = transport
        self.cache = cache or TokenCache(None)
        self.overrides = dict(server_overrides or {})
        self.wall = wall
        self._states: dict[str, AuthState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock_for(self, name: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(name, threading.Lock())

    def auth_spec(self, server: ServerSpec):
        return with_credentials(server.authentication, self.overrides.get(server.name))

    def token_param(self, server: ServerSpec) -> str | None:
        return (self.overrides.get(server.name) or {}).get("token_param")

    def _usable(self, state: AuthState | None) -> bool:
        if state is None or isinstance(state, NoAuth):
            return False
        return not (isinstance(state, Bearer) and state.expired(self.wall()))

    def state_for(self, server: ServerSpec,
                  before_send: Callable[[], None] | None = None) -> AuthState:
        spec = self.auth_spec(server)
        if spec is None:
            return NoAuth()
        with self._lock_for(server.name):
            state = self._states.get(server.name)
            if self._usable(state):
                return state
            state = self.cache.get(server.name)
            if self._usable(state):
                self._states[server.name] = state
                return state
            if isinstance(spec, OAuth2Auth):
                raise AuthRequired(f"server {server.name!r} needs an OAuth2 authorization; "
                                   f"run the auth command first")
            state = simple_authenticate(spec, self.transport,
                                        param_name=self.token_param(server),
                                        before_send=before_send)
            self.store(server.name, state)
            log.info("authenticated against %s", server.name)
            return state

    def store(self, server_name: str, state: AuthState) -> None:
        self._states[server_name] = state
        self.cache.put(server_name, state)

    def invalidate(self, server_name: str) -> None:
        with self._lock_for(server_name):
            self._states.pop(server_name, None)
            self.cache.delete(server_name)
