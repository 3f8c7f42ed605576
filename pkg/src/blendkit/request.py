"""Turning an interaction template plus caller parameters into an HTTP message."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Mapping
from urllib.parse import quote

from .description import (
    BODY_METHODS,
    InteractionSpec,
    ParameterSpec,
    RequestTemplate,
    ServerSpec,
)
from .errors import MissingRequiredParameter, TypeMismatch, UnknownParameter

ACCEPT = {"json": "application/json", "xml": "application/xml"}
DEFAULT_PORTS = {"http": 80, "https": 443}


@dataclass(frozen=True)
class ResolvedParameters:
    pairs: tuple[tuple[str, Any], ...] = ()

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def as_dict(self) -> dict[str, Any]:
        return dict(self.pairs)


@dataclass(frozen=True)
class PreparedRequest:
    method: str
    url: str
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes = b""
    server_name: str = ""
    interaction_name: str = ""

    def header(self, name: str) -> str | None:
        lname = name.lower()
        for k, v in self.headers:
            if k.lower() == lname:
                return v
        return None


def _coerce(spec: ParameterSpec, value: Any) -> Any:
    """Coerce a caller value (possibly CLI text) to the declared parameter type."""
    t = spec.value_type
    bad = TypeMismatch(f"parameter {spec.key!r} expects {t}, got {value!r}")
    if t == "string":
        if isinstance(value, bool) or not isinstance(value, (str, int, float)):
            raise bad
        return value if isinstance(value, str) else render_value(value)
    if t == "integer":
        if isinstance(value, bool):
            raise bad
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            try:
                return int(value.strip(), 10)
            except ValueError:
                raise bad from None
        raise bad
    if t == "number":
        if isinstance(value, bool):
            raise bad
        if isinstance(value, (int, float)):
            return value
        if isinstance(value, str):
            try:
                return int(value.strip(), 10)
            except ValueError:
                pass
            try:
                f = float(value)
            except ValueError:
                raise bad from None
            if f != f or f in (float("inf"), float("-inf")):
                raise bad
            return f
        raise bad
    if t == "boolean":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise bad
    raise bad


def render_value(value: Any) -> str:
    """Canonical text for a scalar: decimal numbers, lowercase booleans."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return json.dumps(value)
    return str(value)


def resolve_parameters(template: RequestTemplate,
                       supplied: Mapping[str, Any] | None = None) -> ResolvedParameters:
    """Apply defaulting and explicit-null suppression, in declaration order.

    A supplied non-null value wins; otherwise a non-null default is sent,
    unless the caller passed ``None`` for that key, which drops it entirely.
    """
    supplied = dict(supplied or {})
    known = {p.key for p in template.url_parameters}
    unknown = [k for k in supplied if k not in known]
    if unknown:
        raise UnknownParameter(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    pairs = []
    for p in template.url_parameters:
        if p.key in supplied:
            value = supplied[p.key]
            if value is None:
                continue
            pairs.append((p.key, _coerce(p, value)))
        elif p.default is not None:
            pairs.append((p.key, p.default))
        elif not p.optional:
            raise MissingRequiredParameter(f"required parameter {p.key!r} not supplied")
    return ResolvedParameters(tuple(pairs))


def percent_encode(text: str) -> str:
    """RFC 3986 encoding: everything but unreserved characters, uppercase hex."""
    return quote(text, safe="")


def encode_query(params) -> str:
    return "&".join(f"{percent_encode(k)}={percent_encode(render_value(v))}" for k, v in params)


def base_url(server: ServerSpec) -> str:
    host = f"[{server.host}]" if ":" in server.host else server.host
    if DEFAULT_PORTS.get(server.scheme) == server.port:
        return f"{server.scheme}://{host}"
    return f"{server.scheme}://{host}:{server.port}"


def build_request(server: ServerSpec, interaction: InteractionSpec,
                  params: ResolvedParameters, user_agent: str | None = None) -> PreparedRequest:
    req = interaction.request
    url = base_url(server) + req.root_path
    query = encode_query(params)
    if query:
        url += "?" + query
    body = b""
    if req.raw_content is not None:
        if req.method not in BODY_METHODS:
            raise ValueError(f"raw_content on a {req.method} request")
        body = req.raw_content.encode("utf-8")
    headers = [("Accept", ACCEPT[interaction.response.serialization_format])]
    if user_agent:
        headers.append(("User-Agent", user_agent))
    return PreparedRequest(method=req.method, url=url, headers=tuple(headers), body=body,
                           server_name=server.name, interaction_name=interaction.name)


def with_query_param(request: PreparedRequest, key: str, value: str) -> PreparedRequest:
    pair = f"{percent_encode(key)}={percent_encode(value)}"
    sep = "&" if "?" in request.url else "?"
    return replace(request, url=request.url + sep + pair)


def with_header(request: PreparedRequest, name: str, value: str) -> PreparedRequest:
    kept = tuple((k, v) for k, v in request.headers if k.lower() != name.lower())
    return replace(request, headers=kept + ((name, value),))
