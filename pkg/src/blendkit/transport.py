"""Sending prepared requests over HTTP."""

from __future__ import annotations

import socket
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Protocol

from .errors import TransportError
from .request import PreparedRequest


@dataclass(frozen=True)
class HttpResponse:
    status: int
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes = b""

    def header(self, name: str) -> str | None:
        lname = name.lower()
        for k, v in self.headers:
            if k.lower() == lname:
                return v
        return None


class HttpTransport(Protocol):
    def send(self, request: PreparedRequest) -> HttpResponse: ...


class UrllibTransport:
    """Blocking transport on top of urllib. Non-2xx answers are responses, not errors."""

    def __init__(self, timeout: float = 30.0, proxies: dict | None = None):
        self.timeout = timeout
        handlers = [] if proxies is None else [urllib.request.ProxyHandler(proxies)]
        self._opener = urllib.request.build_opener(*handlers)

    def send(self, request: PreparedRequest) -> HttpResponse:
        req = urllib.request.Request(request.url, data=request.body or None,
                                     headers=dict(request.headers), method=request.method)
        try:
            with self._opener.open(req, timeout=self.timeout) as resp:
                return HttpResponse(resp.status, tuple(resp.headers.items()), resp.read())
        except urllib.error.HTTPError as exc:
            with exc:
                body = exc.read()
            return HttpResponse(exc.code, tuple(exc.headers.items()), body)
        except (urllib.error.URLError, socket.timeout, ConnectionError, OSError) as exc:
            reason = getattr(exc, "reason", exc)
            raise TransportError(f"{request.method} {_host_of(request.url)}: {reason}") from exc


def _host_of(url: str) -> str:
    # never echo the query string: it may carry a token
    return url.split("?", 1)[0]
