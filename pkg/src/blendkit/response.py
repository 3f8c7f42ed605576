"""Response handling: status check, JSON/XML decoding, schema subset, dot-path extraction."""

from __future__ import annotations

import copy
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Any, Iterable

from .errors import DeserializeError, InvalidSchema, PathConflict, StatusMismatch, UnsupportedSchemaKeyword


class _Missing:
    """Sentinel for a dot-path that resolves to nothing."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MISSING"

    def __bool__(self) -> bool:
        return False


MISSING = _Missing()


# -- dot-paths ---------------------------------------------------------------


def split_path(path: str) -> list[str] | None:
    """Segments of a dot-path, or None if the path is malformed."""
    if not isinstance(path, str) or not path:
        return None
    parts = path.split(".")
    if any(p == "" for p in parts):
        return None
    return parts


def _segments(path: str) -> list[str]:
    parts = split_path(path)
    if parts is None:
        raise ValueError(f"malformed dot-path: {path!r}")
    return parts


def dot_get(tree: Any, path: str) -> Any:
    """Value at ``path`` in ``tree``, or ``MISSING``. Only map keys are traversed."""
    node = tree
    for seg in _segments(path):
        if not isinstance(node, dict) or seg not in node:
            return MISSING
        node = node[seg]
    return node


def dot_set(tree: Any, path: str, value: Any) -> dict:
    """Return a copy of ``tree`` with ``value`` stored at ``path``.

    Maps along the path are shallow-copied; everything off the path is shared
    with the input untouched.
    """
    segs = _segments(path)
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise PathConflict(f"cannot set {path!r}: root is not a map")
    root = dict(tree)
    node = root
    for i, seg in enumerate(segs[:-1]):
        child = node.get(seg, MISSING)
        if child is MISSING:
            child = {}
        elif not isinstance(child, dict):
            raise PathConflict(
                f"cannot set {path!r}: {'.'.join(segs[:i + 1])!r} holds a non-map value")
        else:
            child = dict(child)
        node[seg] = child
        node = child
    node[segs[-1]] = value
    return root


def extract(tree: Any, mapping: Iterable[tuple[str, str]]) -> tuple[dict, list[str]]:
    """Build a unified record from ``tree`` following ``target -> source`` entries.

    Returns the record and the list of source paths that were missing.
    """
    record: dict = {}
    missing: list[str] = []
    for target, source in mapping:
        value = dot_get(tree, source)
        if value is MISSING:
            missing.append(source)
            continue
        record = dot_set(record, target, copy.deepcopy(value))
    return record, missing


# -- status --------------------------------------------------------------------


def check_status(actual: int, expected: int) -> StatusMismatch | None:
    """None when the status matches, otherwise a StatusMismatch value."""
    if actual == expected:
        return None
    return StatusMismatch(actual, expected)


# -- decoding --------------------------------------------------------------------


def deserialize(body: bytes, fmt: str) -> Any:
    fmt = fmt.lower()
    if fmt == "json":
        return _from_json(body)
    if fmt == "xml":
        return _from_xml(body)
    raise ValueError(f"unsupported serialization format {fmt!r}")


def _from_json(body: bytes) -> Any:
    try:
        text = body.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise DeserializeError(f"body is not UTF-8: {exc.reason}", offset=exc.start) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode("utf-8"))
        raise DeserializeError(f"invalid JSON: {exc.msg}", offset=offset, line=exc.lineno,
                               column=exc.colno) from exc


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1] if tag.startswith("{") else tag


def _element(el: ET.Element) -> Any:
    children = list(el)
    text = "".join([el.text or ""] + [c.tail or "" for c in children]).strip()
    if not children and not el.attrib:
        return text if text else None
    node: dict[str, Any] = {}
    for k, v in el.attrib.items():
        node["@" + _local(k)] = v
    for child in children:
        tag = _local(child.tag)
        value = _element(child)
        if tag not in node:
            node[tag] = value
        elif isinstance(node[tag], list):
            node[tag].append(value)
        else:
            # _element never yields a list, so a list here means coalesced siblings
            node[tag] = [node[tag], value]
    if text:
        node["#text"] = text
    return node


def _from_xml(body: bytes) -> dict:
    try:
        root = ET.fromstring(body)
    except ET.ParseError as exc:
        line, col = exc.position
        offset = _byte_offset(body, line, col)
        raise DeserializeError(f"invalid XML: {exc}", offset=offset, line=line,
                               column=col) from exc
    return {_local(root.tag): _element(root)}


def _byte_offset(body: bytes, line: int, col: int) -> int:
    lines = body.split(b"\n")
    return sum(len(x) + 1 for x in lines[:max(line - 1, 0)]) + col


# -- schema subset ---------------------------------------------------------------

SCHEMA_KEYWORDS = frozenset({"type", "properties", "required", "items"})
ANNOTATIONS = frozenset({"$schema", "title", "description"})
SCHEMA_TYPES = ("object", "array", "string", "integer", "number", "boolean", "null")


@dataclass(frozen=True)
class SchemaViolation:
    path: str
    message: str

    def to_dict(self) -> dict:
        return {"path": self.path, "message": self.message}


def _jp(path: str, key: Any) -> str:
    return f"{path}.{key}" if path else str(key)


def check_schema(schema: Any, path: str = "") -> None:
    """Raise if ``schema`` uses anything outside {type, properties, required, items}."""
    if not isinstance(schema, dict):
        raise InvalidSchema(f"schema at {path or '<root>'} must be an object")
    for key, value in schema.items():
        if key in ANNOTATIONS:
            continue
        if key not in SCHEMA_KEYWORDS:
            raise UnsupportedSchemaKeyword(key, path)
        if key == "type":
            types = value if isinstance(value, list) else [value]
            if not types or any(t not in SCHEMA_TYPES for t in types):
                raise InvalidSchema(f"bad type {value!r} at {path or '<root>'}")
        elif key == "properties":
            if not isinstance(value, dict):
                raise InvalidSchema(f"properties at {path or '<root>'} must be an object")
            for name, sub in value.items():
                check_schema(sub, _jp(_jp(path, "properties"), name))
        elif key == "required":
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise InvalidSchema(f"required at {path or '<root>'} must be a list of strings")
        elif key == "items":
            if isinstance(value, list):
                raise UnsupportedSchemaKeyword("items (array form)", path)
            check_schema(value, _jp(path, "items"))


def type_of(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "array"
    if isinstance(value, dict):
        return "object"
    raise TypeError(f"not a tree value: {type(value).__name__}")


def _matches(value: Any, t: str) -> bool:
    actual = type_of(value)
    if t == actual:
        return True
    if t == "number" and actual == "integer":
        return True
    # integral floats count as integers, as in current JSON Schema drafts
    return t == "integer" and actual == "number" and float(value).is_integer()


def validate(tree: Any, schema: dict) -> list[SchemaViolation]:
    check_schema(schema)
    out: list[SchemaViolation] = []
    _validate(tree, schema, "", out)
    return out


def _validate(value: Any, schema: dict, path: str, out: list[SchemaViolation]) -> None:
    if "type" in schema:
        types = schema["type"] if isinstance(schema["type"], list) else [schema["type"]]
        if not any(_matches(value, t) for t in types):
            out.append(SchemaViolation(path, f"expected {' or '.join(types)}, "
                                             f"got {type_of(value)}"))
    if isinstance(value, dict):
        for name in schema.get("required", ()):
            if name not in value:
                out.append(SchemaViolation(_jp(path, name), "required property is missing"))
        for name, sub in schema.get("properties", {}).items():
            if name in value:
                _validate(value[name], sub, _jp(path, name), out)
    if isinstance(value, list) and "items" in schema:
        for i, item in enumerate(value):
            _validate(item, schema["items"], _jp(path, i), out)
