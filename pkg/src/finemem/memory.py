"""Single-layer memory state and the operation transition function.

Memory is a flat collection of items ``{id, content, step}`` where
``step`` records the last chunk step that wrote the item (the
provenance map consumed by evidence-anchored credit assignment).
States are value-like: applying an operation set returns a new state
and never mutates the input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

KIND_INSERT = "insert"
KIND_UPDATE = "update"
KIND_DELETE = "delete"
KIND_SKIP = "skip"

OP_KINDS = (KIND_INSERT, KIND_UPDATE, KIND_DELETE, KIND_SKIP)

TokenCounter = Callable[[str], int]


def whitespace_tokens(text: str) -> int:
    """Default token length measure: whitespace-delimited tokens."""
    return len(text.split())


class SequencingError(ValueError):
    """Operation sets must be applied in step order."""


class UnknownItemError(KeyError):
    """Lookup of an item id that is not present in the state."""


class StateParseError(ValueError):
    """Serialized state could not be decoded."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


@dataclass(frozen=True)
class Operation:
    """One atomic memory action.

    ``target_id`` is required for update/delete and forbidden otherwise;
    ``content`` is required for insert/update and forbidden otherwise.
    """

    kind: str
    target_id: int | None = None
    content: str | None = None


@dataclass(frozen=True)
class MemoryItem:
    id: int
    content: str
    step: int


@dataclass
class MemoryState:
    """Flat memory: items keyed by id, plus the id counter and step count."""

    items: dict[int, MemoryItem] = field(default_factory=dict)
    next_id: int = 0
    step_count: int = 0

    def ordered_items(self) -> list[MemoryItem]:
        """Items in ascending-id order (the canonical iteration order)."""
        return [self.items[i] for i in sorted(self.items)]

    def render(self) -> str:
        """Human/agent-readable listing, one ``[id] content`` line per item."""
        return "\n".join(f"[{it.id}] {it.content}" for it in self.ordered_items())


@dataclass(frozen=True)
class OpOutcome:
    """Result of one operation within an applied set."""

    index: int
    applied: bool
    reason: str | None = None
    item_id: int | None = None


@dataclass(frozen=True)
class ApplyReport:
    step: int
    outcomes: tuple[OpOutcome, ...]

    @property
    def applied_count(self) -> int:
        return sum(1 for o in self.outcomes if o.applied)

    @property
    def rejected(self) -> tuple[OpOutcome, ...]:
        return tuple(o for o in self.outcomes if not o.applied)


def _as_operations(ops) -> Sequence[Operation]:
    # Accept an op_protocol.OperationSet or any sequence of Operations.
    parsed = getattr(ops, "parsed", None)
    if parsed is not None:
        return parsed
    return list(ops)


def apply_operation_set(state: MemoryState, ops, step: int) -> tuple[MemoryState, ApplyReport]:
    """Execute an operation set against ``state`` for chunk step ``step``.

    Operations apply in listed order. Insert assigns ``next_id`` and
    stamps the current step; update rewrites content and re-stamps the
    step; delete removes the item; skip is a no-op. An update/delete
    whose target id does not exist is rejected (recorded in the report)
    without aborting the rest of the set.

    Raises SequencingError unless ``step == state.step_count``.
    """
    if step != state.step_count:
        raise SequencingError(
            f"expected step {state.step_count}, got {step}: operation sets apply in order"
        )
    items = dict(state.items)
    next_id = state.next_id
    outcomes: list[OpOutcome] = []
    for i, op in enumerate(_as_operations(ops)):
        if op.kind == KIND_SKIP:
            outcomes.append(OpOutcome(i, True))
        elif op.kind == KIND_INSERT:
            if not op.content or not op.content.strip():
                outcomes.append(OpOutcome(i, False, reason="empty_content"))
                continue
            items[next_id] = MemoryItem(next_id, op.content, step)
            outcomes.append(OpOutcome(i, True, item_id=next_id))
            next_id += 1
        elif op.kind == KIND_UPDATE:
            if op.target_id not in items:
                outcomes.append(OpOutcome(i, False, reason="unknown_target"))
                continue
            if not op.content or not op.content.strip():
                outcomes.append(OpOutcome(i, False, reason="empty_content"))
                continue
            items[op.target_id] = MemoryItem(op.target_id, op.content, step)
            outcomes.append(OpOutcome(i, True, item_id=op.target_id))
        elif op.kind == KIND_DELETE:
            if op.target_id not in items:
                outcomes.append(OpOutcome(i, False, reason="unknown_target"))
                continue
            del items[op.target_id]
            outcomes.append(OpOutcome(i, True, item_id=op.target_id))
        else:
            outcomes.append(OpOutcome(i, False, reason="bad_op_kind"))
    new_state = MemoryState(items=items, next_id=next_id, step_count=state.step_count + 1)
    return new_state, ApplyReport(step=step, outcomes=tuple(outcomes))


def origin_step(state: MemoryState, item_id: int) -> int:
    """Step of the most recent write (insert or update) to ``item_id``."""
    try:
        return state.items[item_id].step
    except KeyError:
        raise UnknownItemError(item_id) from None


def memory_length(state: MemoryState, tokenizer: TokenCounter = whitespace_tokens) -> int:
    """Total token length of all stored contents; 0 for an empty state."""
    return sum(tokenizer(it.content) for it in state.items.values())


def serialize_state(state: MemoryState) -> str:
    """Canonical JSON form: ``{next_id, step_count, items:[{id,content,step}]}``."""
    payload = {
        "next_id": state.next_id,
        "step_count": state.step_count,
        "items": [
            {"id": it.id, "content": it.content, "step": it.step}
            for it in state.ordered_items()
        ],
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def deserialize_state(text: str) -> MemoryState:
    """Inverse of serialize_state; raises StateParseError on malformed input."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise StateParseError(f"invalid state JSON at position {e.pos}: {e.msg}", e.pos) from None
    if not isinstance(payload, dict):
        raise StateParseError("state payload must be an object")
    try:
        next_id = payload["next_id"]
        step_count = payload["step_count"]
        raw_items = payload["items"]
    except KeyError as e:
        raise StateParseError(f"state payload missing field {e.args[0]!r}") from None
    if not isinstance(next_id, int) or not isinstance(step_count, int) or not isinstance(raw_items, list):
        raise StateParseError("state fields have wrong types")
    items: dict[int, MemoryItem] = {}
    for entry in raw_items:
        if not isinstance(entry, dict):
            raise StateParseError("item entries must be objects")
        try:
            iid, content, step = entry["id"], entry["content"], entry["step"]
        except KeyError as e:
            raise StateParseError(f"item entry missing field {e.args[0]!r}") from None
        if not isinstance(iid, int) or not isinstance(content, str) or not isinstance(step, int):
            raise StateParseError("item fields have wrong types")
        if iid in items:
            raise StateParseError(f"duplicate item id {iid}")
        if iid >= next_id:
            raise StateParseError(f"item id {iid} not below next_id {next_id}")
        if step > step_count:
            raise StateParseError(f"item step {step} exceeds step_count {step_count}")
        items[iid] = MemoryItem(iid, content, step)
    return MemoryState(items=items, next_id=next_id, step_count=step_count)


def replay(op_sets: Iterable, start: MemoryState | None = None) -> tuple[MemoryState, list[ApplyReport]]:
    """Apply a chunk-ordered sequence of operation sets from ``start``."""
    state = start if start is not None else MemoryState()
    reports = []
    for ops in op_sets:
        state, report = apply_operation_set(state, ops, state.step_count)
        reports.append(report)
    return state, reports
