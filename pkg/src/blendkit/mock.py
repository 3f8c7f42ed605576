"""Local HTTP server replaying scripted responses, for offline end-to-end tests.

A fixture lists routes (method, path, query matcher, response script) and an
optional rate-limit simulation. Every request that reaches the server is
captured in an append-only log.
"""

from __future__ import annotations

import json
import shutil
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path
from typing import Any, Callable
from urllib.parse import parse_qsl, urlsplit, urlunsplit

from .errors import BindError
from .request import render_value

WILDCARD = "*"


@dataclass(frozen=True)
class MockResponse:
    status: int = 200
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes = b""

    @classmethod
    def from_dict(cls, d: dict) -> "MockResponse":
        headers = dict(d.get("headers") or {})
        body = d.get("body", b"")
        if isinstance(body, (dict, list)):
            body = json.dumps(body).encode("utf-8")
            headers.setdefault("Content-Type", "application/json")
        elif isinstance(body, str):
            body = body.encode("utf-8")
        elif body is None:
            body = b""
        return cls(int(d.get("status", 200)), tuple(headers.items()), body)


@dataclass(frozen=True)
class Route:
    method: str
    path: str
    responses: tuple[MockResponse, ...]
    params: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if not self.responses:
            raise ValueError(f"route {self.method} {self.path} has no responses")

    def matches(self, method: str, path: str, query: list[tuple[str, str]]) -> bool:
        if method != self.method or path != self.path:
            return False
        got = dict(query)
        for key, expected in self.params:
            if key not in got:
                return False
            if expected != WILDCARD and got[key] != render_value(expected):
                return False
        return True


@dataclass(frozen=True)
class LimitSim:
    allowed: int
    limited_status: int = 429
    reset_after_seconds: float = 3600


@dataclass(frozen=True)
class MockFixture:
    routes: tuple[Route, ...] = ()
    limit_sim: LimitSim | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "MockFixture":
        routes = []
        for r in d.get("routes", ()):
            responses = tuple(MockResponse.from_dict(x) for x in r.get("responses", ()))
            routes.append(Route(r.get("method", "GET").upper(), r["path"], responses,
                                tuple((r.get("params") or {}).items())))
        sim = d.get("limit_sim")
        return cls(tuple(routes), LimitSim(**sim) if sim else None)

    @classmethod
    def load(cls, path: str | Path) -> "MockFixture":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class CapturedRequest:
    order: int
    method: str
    path: str
    query: tuple[tuple[str, str], ...]
    headers: tuple[tuple[str, str], ...]
    body: bytes
    status: int

    def query_dict(self) -> dict[str, str]:
        return dict(self.query)

    def header(self, name: str) -> str | None:
        for k, v in self.headers:
            if k.lower() == name.lower():
                return v
        return None


class _Handler(BaseHTTPRequestHandler):
    server_version = "blendkit-mock"

    def _serve(self):
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        resp = self.server.mock._dispatch(self.command, self.path, list(self.headers.items()),
                                          body)
        self.send_response(resp.status)
        names = {k.lower() for k, _ in resp.headers}
        for k, v in resp.headers:
            self.send_header(k, v)
        if "content-length" not in names:
            self.send_header("Content-Length", str(len(resp.body)))
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(resp.body)

    do_GET = do_POST = do_PUT = do_DELETE = do_PATCH = do_HEAD = _serve

    def send_response(self, code, message=None):
        # no Date/Server headers: replayed responses must be byte-identical
        self.send_response_only(code, message)

    def log_message(self, format, *args):
        pass


class MockServer:
    """Handle for a running mock: ``base_url``, ``log``, ``shutdown()``."""

    def __init__(self, fixture: MockFixture, clock: Callable[[], float] | None = None,
                 host: str = "127.0.0.1", port: int = 0):
        self.fixture = fixture
        self._now = clock or time.monotonic
        self._lock = threading.Lock()
        self._log: list[CapturedRequest] = []
        self._served = [0] * len(fixture.routes)
        self._limit_count = 0
        self._limited_since: float | None = None
        try:
            self._httpd = HTTPServer((host, port), _Handler)
        except OSError as exc:
            raise BindError(f"cannot bind mock server on {host}:{port}: {exc}") from exc
        self._httpd.mock = self
        self.host, self.port = self._httpd.server_address[:2]
        self._thread = threading.Thread(target=self._httpd.serve_forever, args=(0.02,),
                                        daemon=True, name=f"blendkit-mock-{self.port}")
        self._thread.start()

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    @property
    def log(self) -> list[CapturedRequest]:
        with self._lock:
            return list(self._log)

    def requests_to(self, path: str) -> list[CapturedRequest]:
        return [r for r in self.log if r.path == path]

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "MockServer":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()

    def _limited(self) -> bool:
        sim = self.fixture.limit_sim
        if sim is None:
            return False
        now = self._now()
        if self._limited_since is not None and now >= self._limited_since + sim.reset_after_seconds:
            self._limit_count = 0
            self._limited_since = None
        self._limit_count += 1
        if self._limit_count > sim.allowed:
            if self._limited_since is None:
                self._limited_since = now
            return True
        return False

    def _dispatch(self, method: str, target: str, headers, body: bytes) -> MockResponse:
        parts = urlsplit(target)
        query = parse_qsl(parts.query, keep_blank_values=True)
        with self._lock:
            if self._limited():
                resp = MockResponse(self.fixture.limit_sim.limited_status,
                                    (("Content-Type", "application/json"),),
                                    b'{"error": "rate limited"}')
            else:
                resp = self._route(method, parts.path, query)
            self._log.append(CapturedRequest(len(self._log), method, parts.path, tuple(query),
                                             tuple(headers), body, resp.status))
        return resp

    def _route(self, method: str, path: str, query) -> MockResponse:
        for i, route in enumerate(self.fixture.routes):
            if route.matches(method, path, query):
                n = self._served[i]
                self._served[i] += 1
                return route.responses[min(n, len(route.responses) - 1)]
        diag = {"error": "no matching route", "method": method, "path": path,
                "query": [list(q) for q in query]}
        return MockResponse(404, (("Content-Type", "application/json"),),
                            json.dumps(diag).encode("utf-8"))


def start_mock(fixture: MockFixture | dict | str | Path,
               clock: Callable[[], float] | None = None) -> MockServer:
    """Start a mock on a free local port. ``clock`` drives the limit simulation."""
    if isinstance(fixture, dict):
        fixture = MockFixture.from_dict(fixture)
    elif isinstance(fixture, (str, Path)):
        fixture = MockFixture.load(fixture)
    return MockServer(fixture, clock)


# ---------------------------------------------------------------------------
# pointing a configuration directory at a running mock
# ---------------------------------------------------------------------------

_AUTH_URL_FIELDS = ("request_token_url", "access_token_url", "authorize_url")


def _rebase_url(url: str, base: str) -> str:
    b = urlsplit(base)
    u = urlsplit(url)
    return urlunsplit((b.scheme, b.netloc, u.path, u.query, u.fragment))


def rebase_description(doc: dict, base_url: str) -> dict:
    """Copy of a description document whose host and auth URLs target ``base_url``."""
    b = urlsplit(base_url)
    doc = json.loads(json.dumps(doc))
    doc["scheme"] = b.scheme
    doc["host"] = b.hostname
    doc["port"] = b.port or (443 if b.scheme == "https" else 80)
    auth = doc.get("authentication")
    if isinstance(auth, dict):
        for key in _AUTH_URL_FIELDS:
            if isinstance(auth.get(key), str):
                auth[key] = _rebase_url(auth[key], base_url)
    return doc


def materialize_config(source: str | Path, dest: str | Path, base_url: str,
                       servers: list[str] | None = None) -> Path:
    """Copy a config directory to ``dest`` with every server pointed at ``base_url``.

    ``servers`` limits the rewrite to the named servers; others are copied as is.
    """
    source, dest = Path(source), Path(dest)
    (dest / "apis").mkdir(parents=True, exist_ok=True)
    if (source / "general.json").exists():
        shutil.copy(source / "general.json", dest / "general.json")
    for path in sorted((source / "apis").glob("*.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        if servers is None or doc.get("name") in servers:
            doc = rebase_description(doc, base_url)
        (dest / "apis" / path.name).write_text(json.dumps(doc, indent=2) + "\n",
                                               encoding="utf-8")
    return dest
