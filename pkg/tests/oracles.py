"""Independent reference implementations the library is checked against.

None of these import the code paths they check.
"""

from __future__ import annotations

import bisect
import random
import string

UNRESERVED = frozenset((string.ascii_letters + string.digits + "-._~").encode())


def ref_percent_encode(text: str) -> str:
    return "".join(chr(b) if b in UNRESERVED else "%{:02X}".format(b) for b in text.encode("utf-8"))


# -- parameter truth table ---------------------------------------------------------
# (optional, has_default, supplied) -> "value" | "default" | "omitted" | "error"
PARAMETER_TRUTH_TABLE = {
    (False, False, "value"): "value",
    (False, False, "null"): "omitted",
    (False, False, "absent"): "error",
    (False, True, "value"): "value",
    (False, True, "null"): "omitted",
    (False, True, "absent"): "default",
    (True, False, "value"): "value",
    (True, False, "null"): "omitted",
    (True, False, "absent"): "omitted",
    (True, True, "value"): "value",
    (True, True, "null"): "omitted",
    (True, True, "absent"): "default",
}


# -- sliding window -------------------------------------------------------------------


def max_in_closed_window(timestamps: list[float], width: float = 3600.0) -> int:
    """Largest number of timestamps inside any closed interval [a, a + width]."""
    ts = sorted(timestamps)
    best = 0
    for i, start in enumerate(ts):
        j = bisect.bisect_right(ts, start + width)
        best = max(best, j - i)
    return best


def brute_force_wait(timestamps: list[float], limit: int, now: float) -> float:
    """Infimum of the delays after which one more request fits the closed window."""
    live = [t for t in timestamps if now - t <= 3600]
    if len(live) < limit:
        return 0.0
    candidates = sorted(t + 3600 for t in live)
    for c in candidates:
        if sum(1 for t in live if c - t < 3600) < limit:
            return c - now
    raise AssertionError("unreachable")


# -- dot paths and trees --------------------------------------------------------------


def oracle_get(tree, path: str):
    """Recursive descent over map keys; returns (found, value)."""
    head, _, rest = path.partition(".")
    if not isinstance(tree, dict) or head not in tree:
        return False, None
    if not rest:
        return True, tree[head]
    return oracle_get(tree[head], rest)


def leaf_paths(tree, prefix=()):
    """Every path to a non-map value or an empty map."""
    if isinstance(tree, dict) and tree:
        for k, v in tree.items():
            yield from leaf_paths(v, prefix + (k,))
    else:
        yield prefix


KEYS = ["a", "b", "c", "post", "data", "text", "x"]


def random_tree(rng: random.Random, depth: int = 3):
    roll = rng.random()
    if depth == 0 or roll < 0.25:
        return rng.choice([rng.randint(-5, 5), rng.choice(["hi", "", "z"]), True, None, 1.5])
    if roll < 0.35:
        return [random_tree(rng, depth - 1) for _ in range(rng.randint(0, 3))]
    return {k: random_tree(rng, depth - 1) for k in rng.sample(KEYS, rng.randint(0, 4))}


def random_path(rng: random.Random, max_len: int = 3) -> str:
    return ".".join(rng.choice(KEYS) for _ in range(rng.randint(1, max_len)))


def existing_paths(tree, prefix=()):
    if isinstance(tree, dict):
        for k, v in tree.items():
            yield ".".join(prefix + (k,))
            yield from existing_paths(v, prefix + (k,))


def random_mapping(rng: random.Random, tree) -> list[tuple[str, str]]:
    have = list(existing_paths(tree))
    targets: list[tuple[str, ...]] = []
    for _ in range(rng.randint(0, 5)):
        t = tuple(random_path(rng).split("."))
        if any(t[:len(o)] == o or o[:len(t)] == t for o in targets):
            continue
        targets.append(t)
    entries = []
    for t in targets:
        src = rng.choice(have) if have and rng.random() < 0.7 else random_path(rng)
        entries.append((".".join(t), src))
    return entries


# -- schema subset ----------------------------------------------------------------------


def _kind(v):
    if v is None:
        return "null"
    if v is True or v is False:
        return "boolean"
    if type(v) is int:
        return "integer"
    if type(v) is float:
        return "integer" if v == int(v) else "number"
    if type(v) is str:
        return "string"
    if type(v) is list:
        return "array"
    return "object"


def oracle_violations(value, schema, path=()):
    """Set of (path tuple, keyword) pairs where ``value`` breaks ``schema``."""
    found = set()
    if "type" in schema:
        allowed = schema["type"] if type(schema["type"]) is list else [schema["type"]]
        k = _kind(value)
        ok = k in allowed or (k == "integer" and "number" in allowed)
        if not ok:
            found.add((path, "type"))
    if _kind(value) == "object":
        for name in schema.get("required", []):
            if name not in value:
                found.add((path + (name,), "required"))
        for name, sub in schema.get("properties", {}).items():
            if name in value:
                found |= oracle_violations(value[name], sub, path + (name,))
    if _kind(value) == "array" and "items" in schema:
        for i, el in enumerate(value):
            found |= oracle_violations(el, schema["items"], path + (str(i),))
    return found


TYPES = ["object", "array", "string", "integer", "number", "boolean", "null"]


def schema_for(rng: random.Random, value, depth: int = 3) -> dict:
    """A schema loosely derived from ``value`` so both outcomes are common."""
    schema: dict = {}
    k = _kind(value)
    if rng.random() < 0.8:
        t = k if rng.random() < 0.75 else rng.choice(TYPES)
        schema["type"] = t if rng.random() < 0.8 else [t, rng.choice(TYPES)]
    if k == "object" and depth > 0:
        keys = list(value)
        if rng.random() < 0.7:
            schema["properties"] = {n: schema_for(rng, value[n], depth - 1)
                                    for n in rng.sample(keys, rng.randint(0, len(keys)))}
        if rng.random() < 0.6:
            pool = keys + ["missing1", "missing2"]
            schema["required"] = rng.sample(pool, rng.randint(0, min(3, len(pool))))
    if k == "array" and value and depth > 0 and rng.random() < 0.7:
        schema["items"] = schema_for(rng, rng.choice(value), depth - 1)
    if k not in ("object", "array") and rng.random() < 0.2:
        schema["properties"] = {"a": {"type": "string"}}
    return schema
