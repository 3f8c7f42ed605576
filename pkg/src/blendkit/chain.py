"""Declarative request chains: steps that collect values and fan out over them.

A chain file looks like::

    {"steps": [
      {"id": "search", "server": "twitter-search", "interaction": "search",
       "params": [{"q": "good spirit", "page": 1}, {"q": "good spirit", "page": 2}],
       "collect": {"name": "users", "source": "results.from_user", "unique": true}},
      {"id": "followers", "server": "twitter-generic", "interaction": "followers",
       "foreach": "${users}", "params": {"screen_name": "${item}"}}
    ]}

``params`` is one parameter map or a list of them (one request each).
``${name}`` refers to a collection gathered by an earlier step and ``${item}``
to the current element inside a ``foreach`` step.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from .controller import BlendResult
from .description import Catalog, load_document
from .errors import BlendError, ChainAborted, ParameterError, SpecError, SpecErrors
from .response import MISSING, dot_get, split_path

log = logging.getLogger(__name__)

_REF = re.compile(r"\$\{([^}]*)\}")
_WHOLE_REF = re.compile(r"^\$\{([^}]*)\}$")
ITEM = "item"
_STEP_FIELDS = ("id", "server", "interaction", "params", "foreach", "collect", "required")


@dataclass(frozen=True)
class Collect:
    name: str
    source: str
    unique: bool = False


@dataclass(frozen=True)
class Step:
    id: str
    server: str
    interaction: str
    params: tuple[Mapping[str, Any], ...] = ({},)
    foreach: str | None = None
    collect: Collect | None = None
    required: bool | None = None


@dataclass(frozen=True)
class ChainSpec:
    steps: tuple[Step, ...] = ()

    def referenced_collections(self) -> set[str]:
        names = set()
        for step in self.steps:
            if step.foreach:
                names.add(step.foreach)
            for ps in step.params:
                for v in ps.values():
                    if isinstance(v, str):
                        names.update(n for n in _REF.findall(v) if n != ITEM)
        return names

    def is_required(self, step: Step) -> bool:
        if step.required is not None:
            return step.required
        return step.collect is not None and step.collect.name in self.referenced_collections()


def parse_chain(document: str | bytes | Mapping, catalog: Catalog | None = None) -> ChainSpec:
    """Validate a chain document; with a catalog, also check server/interaction names."""
    doc = document if isinstance(document, Mapping) else load_document(document)
    errors: list[SpecError] = []
    err = lambda path, msg: errors.append(SpecError(path, msg))  # noqa: E731

    if not isinstance(doc, Mapping) or not isinstance(doc.get("steps"), list):
        raise SpecErrors([SpecError("steps", "expected an object with a 'steps' array")])
    for key in doc:
        if key != "steps":
            err(key, "unknown field")

    steps: list[Step] = []
    ids: set[str] = set()
    collections: set[str] = set()
    for i, raw in enumerate(doc["steps"]):
        path = f"steps.{i}"
        if not isinstance(raw, Mapping):
            err(path, "expected an object")
            continue
        for key in raw:
            if key not in _STEP_FIELDS:
                err(f"{path}.{key}", "unknown field")
        for key in ("id", "server", "interaction"):
            if not isinstance(raw.get(key), str) or not raw.get(key):
                err(f"{path}.{key}", "expected a non-empty string")
        sid = raw.get("id")
        if isinstance(sid, str) and sid in ids:
            err(f"{path}.id", f"duplicate step id {sid!r}")
        ids.add(sid)

        foreach = raw.get("foreach")
        if foreach is not None:
            m = _WHOLE_REF.match(foreach) if isinstance(foreach, str) else None
            if m is None:
                err(f"{path}.foreach", "expected a reference like '${collection}'")
                foreach = None
            elif m.group(1) not in collections:
                err(f"{path}.foreach", f"reference to unknown collection {m.group(1)!r}")
                foreach = None
            else:
                foreach = m.group(1)

        raw_params = raw.get("params", {})
        psets = raw_params if isinstance(raw_params, list) else [raw_params]
        if not psets:
            err(f"{path}.params", "parameter list must not be empty")
        for j, ps in enumerate(psets):
            ppath = f"{path}.params" + (f".{j}" if isinstance(raw_params, list) else "")
            if not isinstance(ps, Mapping):
                err(ppath, "expected an object of parameters")
                continue
            for key, value in ps.items():
                if value is not None and not isinstance(value, (str, int, float, bool)):
                    err(f"{ppath}.{key}", "expected a scalar, null or reference")
                    continue
                for ref in _REF.findall(value) if isinstance(value, str) else ():
                    if ref == ITEM:
                        if "foreach" not in raw:
                            err(f"{ppath}.{key}", "${item} is only valid in a foreach step")
                    elif ref not in collections:
                        err(f"{ppath}.{key}", f"reference to unknown collection {ref!r}")

        collect = None
        rc = raw.get("collect")
        if rc is not None:
            if (not isinstance(rc, Mapping) or not isinstance(rc.get("name"), str)
                    or not rc.get("name") or split_path(rc.get("source")) is None
                    or not isinstance(rc.get("unique", False), bool)):
                err(f"{path}.collect", "expected {name: string, source: dot-path, unique: bool}")
            else:
                collect = Collect(rc["name"], rc["source"], rc.get("unique", False))
        required = raw.get("required")
        if required is not None and not isinstance(required, bool):
            err(f"{path}.required", "expected a boolean")
            required = None

        if collect is not None:
            collections.add(collect.name)
        if all(isinstance(raw.get(k), str) for k in ("id", "server", "interaction")):
            steps.append(Step(raw["id"], raw["server"], raw["interaction"],
                              tuple(dict(p) for p in psets if isinstance(p, Mapping)) or ({},),
                              foreach, collect, required))
    if errors:
        raise SpecErrors(errors)

    spec = ChainSpec(tuple(steps))
    if catalog is not None:
        for step in spec.steps:
            server = catalog.get(step.server)
            inter = server.interaction(step.interaction)
            known = {p.key for p in inter.request.url_parameters}
            for ps in step.params:
                unknown = sorted(set(ps) - known)
                if unknown:
                    errors.append(SpecError(f"steps.{step.id}.params",
                                            f"unknown parameter(s) for {step.server}/"
                                            f"{step.interaction}: {', '.join(unknown)}"))
        if errors:
            raise SpecErrors(errors)
    return spec


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def collect_values(tree: Any, path: str) -> list:
    """Values at ``path``; the first list met on the way is mapped over, one level."""
    segs = split_path(path)
    node = tree
    for i, seg in enumerate(segs):
        if isinstance(node, list):
            rest = ".".join(segs[i:])
            return [v for v in (dot_get(el, rest) for el in node)
                    if v is not MISSING and v is not None]
        if not isinstance(node, dict) or seg not in node:
            return []
        node = node[seg]
    if isinstance(node, list):
        return [v for v in node if v is not None]
    return [] if node is None else [node]


def _substitute(value: Any, item: Any, collections: Mapping[str, list]) -> Any:
    if not isinstance(value, str):
        return value

    def lookup(name: str) -> Any:
        if name == ITEM:
            return item
        return ",".join(str(v) for v in collections[name])

    whole = _WHOLE_REF.match(value)
    if whole:
        return lookup(whole.group(1))
    return _REF.sub(lambda m: str(lookup(m.group(1))), value)


@dataclass
class StepRun:
    params: dict
    result: BlendResult
    item: Any = None

    def to_dict(self, timing: bool = True) -> dict:
        env = self.result.to_dict()
        if not timing:
            env.pop("timing", None)
        return {"item": self.item, "params": self.params, "result": env}


@dataclass
class StepResult:
    id: str
    runs: list[StepRun] = field(default_factory=list)

    @property
    def errors(self) -> int:
        return sum(1 for r in self.runs if not r.result.ok)


@dataclass
class ChainResult:
    steps: list[StepResult] = field(default_factory=list)
    collections: dict[str, list] = field(default_factory=dict)
    status: str = "ok"
    error: dict | None = None

    def step(self, step_id: str) -> StepResult:
        for s in self.steps:
            if s.id == step_id:
                return s
        raise KeyError(step_id)

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "status": self.status,
            "error": self.error,
            "collections": self.collections,
            "steps": [{"id": s.id, "runs": [r.to_dict(timing) for r in s.runs]}
                      for s in self.steps],
        }

    def to_json(self, timing: bool = True, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(timing), indent=indent, sort_keys=True,
                          ensure_ascii=False)


def _failed_result(step: Step, exc: BlendError) -> BlendResult:
    return BlendResult(step.server, step.interaction, error=exc.to_dict())


def _key(value: Any) -> str:
    return json.dumps(value, sort_keys=True)


def run_chain(spec: ChainSpec, session) -> ChainResult:
    """Run every step in order on ``session`` (a :class:`~blendkit.controller.Blender`).

    Raises :class:`ChainAborted` (with the partial result on ``.result``) when
    a required step yields nothing to collect.
    """
    out = ChainResult()
    for step in spec.steps:
        sr = StepResult(step.id)
        out.steps.append(sr)
        items = list(out.collections[step.foreach]) if step.foreach else [None]
        gathered: list = []
        for item in items:
            for pset in step.params:
                params = {k: _substitute(v, item, out.collections) for k, v in pset.items()}
                try:
                    result = session.call(step.server, step.interaction, params)
                except ParameterError as exc:
                    result = _failed_result(step, exc)
                sr.runs.append(StepRun(params, result, item))
                if step.collect and result.ok:
                    gathered.extend(collect_values(result.prepared_content, step.collect.source))
        if step.collect:
            if step.collect.unique:
                seen, uniq = set(), []
                for v in gathered:
                    k = _key(v)
                    if k not in seen:
                        seen.add(k)
                        uniq.append(v)
                gathered = uniq
            out.collections[step.collect.name] = gathered
        log.info("chain step %s: %d request(s), %d error(s)", step.id, len(sr.runs), sr.errors)

        if spec.is_required(step):
            empty = step.collect is not None and not gathered
            if empty or (step.collect is None and sr.errors):
                out.status = "aborted"
                reason = (f"required step {step.id!r} collected no values" if empty
                          else f"required step {step.id!r} had {sr.errors} failed request(s)")
                exc = ChainAborted(reason)
                out.error = exc.to_dict()
                exc.result = out
                raise exc
    if any(s.errors for s in out.steps):
        out.status = "partial"
    return out
