"""Parsing and validation of manager-agent output into operation sets.

Wire format: either the bare token ``done`` (a single skip covering the
whole step) or a JSON array of call objects
``{"op": "insert"|"update"|"delete", "id": <int>, "content": <str>}``,
with ``id`` only on update/delete and ``content`` only on insert/update.
``op`` is case-insensitive. Parsing is total: any input yields an
OperationSet, and every failure is recorded as an invalid operation
(the signal the formatting reward consumes).

Reason codes: unknown_target, empty_content, missing_field,
extra_field, bad_op_kind, unparseable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .memory import (
    KIND_DELETE,
    KIND_INSERT,
    KIND_SKIP,
    KIND_UPDATE,
    MemoryState,
    Operation,
    apply_operation_set,
)

SKIP_TOKEN = "done"

REASON_UNKNOWN_TARGET = "unknown_target"
REASON_EMPTY_CONTENT = "empty_content"
REASON_MISSING_FIELD = "missing_field"
REASON_EXTRA_FIELD = "extra_field"
REASON_BAD_OP_KIND = "bad_op_kind"
REASON_UNPARSEABLE = "unparseable"

_FIELDS_BY_KIND = {
    KIND_INSERT: {"op", "content"},
    KIND_UPDATE: {"op", "id", "content"},
    KIND_DELETE: {"op", "id"},
}


@dataclass(frozen=True)
class InvalidOp:
    """One element of manager output that failed to parse or validate."""

    index: int
    reason: str
    detail: str = ""


@dataclass(frozen=True)
class OperationSet:
    raw_text: str
    parsed: tuple[Operation, ...]
    invalid: tuple[InvalidOp, ...]

    @property
    def invalid_count(self) -> int:
        return len(self.invalid)

    @property
    def total_count(self) -> int:
        return len(self.parsed) + len(self.invalid)


@dataclass(frozen=True)
class ValidityVerdict:
    valid: bool
    reason: str | None = None


def _classify_element(index: int, element) -> Operation | InvalidOp:
    if not isinstance(element, dict):
        return InvalidOp(index, REASON_UNPARSEABLE, "element is not an object")
    if "op" not in element:
        return InvalidOp(index, REASON_MISSING_FIELD, "op")
    kind_raw = element["op"]
    if not isinstance(kind_raw, str) or kind_raw.lower() not in _FIELDS_BY_KIND:
        return InvalidOp(index, REASON_BAD_OP_KIND, str(kind_raw))
    kind = kind_raw.lower()
    allowed = _FIELDS_BY_KIND[kind]
    extra = set(element) - allowed
    if extra:
        return InvalidOp(index, REASON_EXTRA_FIELD, ",".join(sorted(extra)))
    missing = allowed - set(element)
    if missing:
        return InvalidOp(index, REASON_MISSING_FIELD, ",".join(sorted(missing)))
    target_id = None
    if "id" in allowed:
        target_id = element["id"]
        if isinstance(target_id, bool) or not isinstance(target_id, int) or target_id < 0:
            return InvalidOp(index, REASON_UNPARSEABLE, "id must be a non-negative integer")
    content = None
    if "content" in allowed:
        content = element["content"]
        if not isinstance(content, str):
            return InvalidOp(index, REASON_UNPARSEABLE, "content must be a string")
        if not content.strip():
            return InvalidOp(index, REASON_EMPTY_CONTENT)
    return Operation(kind=kind, target_id=target_id, content=content)


def parse_manager_output(text: str) -> OperationSet:
    """Parse manager output into an OperationSet; never raises.

    The bare token ``done`` (whitespace-trimmed) is a single valid skip.
    Otherwise the text must be a JSON array; each element is classified
    independently and order is preserved. Text that is not a JSON array
    counts as one invalid operation. Empty output yields an empty set
    (total_count 0), which the formatting reward treats as a failure.
    """
    trimmed = text.strip()
    if not trimmed:
        return OperationSet(raw_text=text, parsed=(), invalid=())
    if trimmed == SKIP_TOKEN:
        return OperationSet(raw_text=text, parsed=(Operation(kind=KIND_SKIP),), invalid=())
    try:
        payload = json.loads(trimmed)
    except json.JSONDecodeError as e:
        return OperationSet(
            raw_text=text,
            parsed=(),
            invalid=(InvalidOp(0, REASON_UNPARSEABLE, f"not JSON: {e.msg} at {e.pos}"),),
        )
    if not isinstance(payload, list):
        return OperationSet(
            raw_text=text,
            parsed=(),
            invalid=(InvalidOp(0, REASON_UNPARSEABLE, "top level is not an array"),),
        )
    if not payload:
        # An empty array is not a valid way to express "no change"; done is.
        return OperationSet(
            raw_text=text,
            parsed=(),
            invalid=(InvalidOp(0, REASON_UNPARSEABLE, "empty operation array"),),
        )
    parsed: list[Operation] = []
    invalid: list[InvalidOp] = []
    for i, element in enumerate(payload):
        result = _classify_element(i, element)
        if isinstance(result, Operation):
            parsed.append(result)
        else:
            invalid.append(result)
    return OperationSet(raw_text=text, parsed=tuple(parsed), invalid=tuple(invalid))


def validate_operation(op: Operation, state: MemoryState) -> ValidityVerdict:
    """Field-presence check plus target existence against ``state``."""
    if op.kind == KIND_SKIP:
        if op.target_id is not None or op.content is not None:
            return ValidityVerdict(False, REASON_EXTRA_FIELD)
        return ValidityVerdict(True)
    if op.kind not in (KIND_INSERT, KIND_UPDATE, KIND_DELETE):
        return ValidityVerdict(False, REASON_BAD_OP_KIND)
    needs_target = op.kind in (KIND_UPDATE, KIND_DELETE)
    needs_content = op.kind in (KIND_INSERT, KIND_UPDATE)
    if needs_target and op.target_id is None:
        return ValidityVerdict(False, REASON_MISSING_FIELD)
    if not needs_target and op.target_id is not None:
        return ValidityVerdict(False, REASON_EXTRA_FIELD)
    if needs_content and (op.content is None or not op.content.strip()):
        return ValidityVerdict(False, REASON_EMPTY_CONTENT if op.content is not None else REASON_MISSING_FIELD)
    if not needs_content and op.content is not None:
        return ValidityVerdict(False, REASON_EXTRA_FIELD)
    if needs_target and op.target_id not in state.items:
        return ValidityVerdict(False, REASON_UNKNOWN_TARGET)
    return ValidityVerdict(True)


def validity_ratio(ops: OperationSet, state: MemoryState | None = None) -> float:
    """Fraction of valid operations, the per-step formatting reward.

    Without a state this is the syntactic ratio. With a state, parsed
    operations are validated by simulating sequential application, so
    an update whose target was inserted earlier in the same set counts
    valid, and a dangling target counts invalid. An empty set (no
    output) scores 0.
    """
    total = ops.total_count
    if total == 0:
        return 0.0
    if state is None:
        valid = len(ops.parsed)
    else:
        _, report = apply_operation_set(state, ops, state.step_count)
        valid = report.applied_count
    return valid / total
