"""Exception hierarchy shared by every blendkit module."""

from __future__ import annotations


class BlendError(Exception):
    """Base class for all blendkit errors."""

    #: short stable identifier used in serialized envelopes
    kind = "BlendError"

    def to_dict(self) -> dict:
        return {"type": self.kind, "message": str(self)}


# -- description documents ---------------------------------------------------


class MalformedDocument(BlendError):
    kind = "MalformedDocument"

    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 source: str | None = None):
        self.line = line
        self.column = column
        self.source = source
        where = ""
        if source:
            where += f"{source}: "
        if line is not None:
            where += f"line {line} column {column}: "
        super().__init__(where + message)


class SpecError(BlendError):
    """One violation inside a description document."""

    kind = "SpecError"

    def __init__(self, path: str, message: str, source: str | None = None):
        self.path = path
        self.message = message
        self.source = source
        super().__init__(self._render())

    def _render(self) -> str:
        prefix = f"{self.source}: " if self.source else ""
        return f"{prefix}{self.path or '<root>'}: {self.message}"

    def to_dict(self) -> dict:
        d = {"type": self.kind, "path": self.path, "message": self.message}
        if self.source:
            d["source"] = self.source
        return d

    def __eq__(self, other):
        if not isinstance(other, SpecError):
            return NotImplemented
        return (self.path, self.message, self.source) == (other.path, other.message, other.source)

    def __hash__(self):
        return hash((self.path, self.message, self.source))


class SpecErrors(BlendError):
    """Raised with every violation found, never just the first."""

    kind = "SpecErrors"

    def __init__(self, errors: list[SpecError]):
        self.errors = list(errors)
        lines = "\n".join(f"  {e}" for e in self.errors)
        super().__init__(f"{len(self.errors)} specification error(s):\n{lines}")

    def to_dict(self) -> dict:
        return {"type": self.kind, "message": f"{len(self.errors)} specification error(s)",
                "errors": [e.to_dict() for e in self.errors]}


class DuplicateServerName(BlendError):
    kind = "DuplicateServerName"

    def __init__(self, name: str, files: list[str]):
        self.name = name
        self.files = files
        super().__init__(f"server name {name!r} declared in several files: {', '.join(files)}")


class CatalogIOError(BlendError):
    kind = "IoError"


# -- request building ----------------------------------------------------------


class ParameterError(BlendError):
    kind = "ParameterError"


class UnknownParameter(ParameterError):
    kind = "UnknownParameter"


class MissingRequiredParameter(ParameterError):
    kind = "MissingRequiredParameter"


class TypeMismatch(ParameterError):
    kind = "TypeMismatch"


# -- transport / auth ------------------------------------------------------------


class TransportError(BlendError):
    kind = "TransportError"


class AuthError(BlendError):
    kind = "AuthError"


class AuthRejected(AuthError):
    kind = "AuthRejected"

    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class TokenNotFound(AuthError):
    kind = "TokenNotFound"


class AuthRequired(AuthError):
    """An interactive flow must run before this server can be called."""

    kind = "AuthRequired"


class NoAuthConfigured(AuthError):
    kind = "NoAuthConfigured"


# -- policy --------------------------------------------------------------------


class PolicyExhausted(BlendError):
    kind = "PolicyExhausted"

    def __init__(self, server: str, probes: int, status: int):
        self.server = server
        self.probes = probes
        self.status = status
        super().__init__(
            f"{server}: still receiving too-many-calls status {status} after {probes} probe(s)")


# -- response pipeline -----------------------------------------------------------


class StatusMismatch(BlendError):
    kind = "StatusMismatch"

    def __init__(self, actual: int, expected: int):
        self.actual = actual
        self.expected = expected
        super().__init__(f"expected status {expected}, got {actual}")

    def to_dict(self) -> dict:
        return {"type": self.kind, "message": str(self),
                "actual": self.actual, "expected": self.expected}

    def __eq__(self, other):
        if not isinstance(other, StatusMismatch):
            return NotImplemented
        return (self.actual, self.expected) == (other.actual, other.expected)

    def __hash__(self):
        return hash((self.actual, self.expected))


class DeserializeError(BlendError):
    kind = "DeserializeError"

    def __init__(self, message: str, offset: int | None = None, line: int | None = None,
                 column: int | None = None):
        self.offset = offset
        self.line = line
        self.column = column
        super().__init__(message)

    def to_dict(self) -> dict:
        return {"type": self.kind, "message": str(self), "offset": self.offset,
                "line": self.line, "column": self.column}


class UnsupportedSchemaKeyword(BlendError):
    kind = "UnsupportedSchemaKeyword"

    def __init__(self, keyword: str, path: str = ""):
        self.keyword = keyword
        self.path = path
        super().__init__(f"unsupported schema keyword {keyword!r} at {path or '<root>'}")


class InvalidSchema(BlendError):
    kind = "InvalidSchema"


class PathConflict(BlendError):
    kind = "PathConflict"


# -- session lifecycle -----------------------------------------------------------


class LifecycleError(BlendError):
    kind = "LifecycleError"


class UnknownServer(LifecycleError):
    kind = "UnknownServer"


class UnknownInteraction(LifecycleError):
    kind = "UnknownInteraction"


class NoServerLoaded(LifecycleError):
    kind = "NoServerLoaded"


class NoInteractionLoaded(LifecycleError):
    kind = "NoInteractionLoaded"


# -- chains / mock -------------------------------------------------------------------


class ChainAborted(BlendError):
    kind = "ChainAborted"


class BindError(BlendError):
    kind = "BindError"
