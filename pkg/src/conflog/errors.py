"""Exception hierarchy.

Every error carries a module-qualified ``code`` (``catalog.DuplicateKey``,
``frontend.SyntaxError`` ...) so the CLI can report it uniformly.
"""

from __future__ import annotations


class ConflogError(Exception):
    """Input error: bad document, bad source, bad arguments."""

    code = "conflog.Error"


class InvariantViolation(ConflogError):
    """Internal consistency check failed. Always a bug, never bad input."""

    code = "conflog.InvariantViolation"


# config-catalog


class MalformedDoc(ConflogError):
    code = "catalog.MalformedDoc"


class DuplicateKey(ConflogError):
    code = "catalog.DuplicateKey"

    def __init__(self, key: str, first: tuple[str, int], second: tuple[str, int]):
        self.key = key
        self.first = first
        self.second = second
        super().__init__(
            f"duplicate key {key!r} at {first[0]}#{first[1]} and {second[0]}#{second[1]}"
        )


# frontend-ir


class SourceSyntaxError(ConflogError):
    code = "frontend.SyntaxError"

    def __init__(self, message: str, path: str = "<string>", line: int = 0, col: int = 0):
        self.path = path
        self.line = line
        self.col = col
        self.message = message
        super().__init__(f"{path}:{line}:{col}: {message}")


class SchemaViolation(ConflogError):
    code = "frontend.SchemaViolation"


class SsaViolation(ConflogError):
    code = "frontend.SsaViolation"


# depgraph


class UnknownNode(ConflogError):
    code = "depgraph.UnknownNode"


# log-synth


class ConstraintUnderivable(ConflogError):
    code = "synth.ConstraintUnderivable"


class ReparseFailure(ConflogError):
    code = "synth.ReparseFailure"


class EndpointUnavailable(ConflogError):
    code = "synth.EndpointUnavailable"


class ResponseRejected(ConflogError):
    code = "synth.ResponseRejected"

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"generator response rejected: {reason}")
