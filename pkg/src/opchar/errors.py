"""Exception types shared across the toolkit.

Every error raised on user input derives from OpcharError so the CLI can map
them to a diagnostic on stderr and exit code 2 without ever crashing.
"""

from __future__ import annotations


class OpcharError(Exception):
    """Base class for all input/usage errors."""


class InvalidTrace(OpcharError):
    """A Trace violates one of its structural invariants."""


class ChildEscapesParent(InvalidTrace):
    def __init__(self, offenders: list[tuple[int, int]], detail: str = ""):
        self.offenders = offenders
        ids = ", ".join(f"child {c} of parent {p}" for c, p in offenders)
        super().__init__(f"child interval not contained in parent: {ids}" + (f" ({detail})" if detail else ""))


class DanglingParentId(InvalidTrace):
    def __init__(self, offenders: list[tuple[int, int]]):
        self.offenders = offenders
        ids = ", ".join(f"event {c} -> missing parent {p}" for c, p in offenders)
        super().__init__(f"parent_id references missing event: {ids}")


class OverlappingSiblings(InvalidTrace):
    def __init__(self, offenders: list[tuple[int, int]]):
        self.offenders = offenders
        ids = ", ".join(f"{a}/{b}" for a, b in offenders)
        super().__init__(f"overlapping sibling intervals on one track: {ids}")


class UnrecognizedFormat(OpcharError):
    pass


class MalformedJson(OpcharError):
    pass


class SchemaVersionMismatch(OpcharError):
    pass


class BadPattern(OpcharError):
    pass


class DuplicatePriority(OpcharError):
    pass


class ViewMismatch(OpcharError):
    pass


class ModelMismatch(OpcharError):
    pass


class EmptyBaseline(OpcharError):
    pass


class DuplicateSeqLen(OpcharError):
    pass


class InfeasibleSpec(OpcharError):
    pass


class UnsupportedFormat(OpcharError):
    pass


class BadConfig(OpcharError):
    pass


class UsageError(OpcharError):
    pass
