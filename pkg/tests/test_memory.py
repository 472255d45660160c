from __future__ import annotations

import random

import pytest

from finemem.memory import (
    MemoryItem,
    MemoryState,
    Operation,
    SequencingError,
    StateParseError,
    UnknownItemError,
    apply_operation_set,
    deserialize_state,
    memory_length,
    origin_step,
    replay,
    serialize_state,
    whitespace_tokens,
)
from oracles import replay_event_log


def test_first_insert_assigns_id_zero():
    state, report = apply_operation_set(
        MemoryState(), [Operation("insert", content="Alice works at Acme")], 0
    )
    assert state.ordered_items() == [MemoryItem(0, "Alice works at Acme", 0)]
    assert state.next_id == 1
    assert state.step_count == 1
    assert report.applied_count == 1


def test_update_and_insert_apply_in_listed_order():
    state, _ = apply_operation_set(MemoryState(), [Operation("insert", content="Alice works at Acme")], 0)
    ops = [
        Operation("update", target_id=0, content="Alice works at Beta"),
        Operation("insert", content="Bob joined"),
    ]
    state, report = apply_operation_set(state, ops, 1)
    assert state.items[0] == MemoryItem(0, "Alice works at Beta", 1)
    assert state.items[1] == MemoryItem(1, "Bob joined", 1)
    assert report.applied_count == 2


def test_skip_changes_only_step_count():
    state, _ = apply_operation_set(MemoryState(), [Operation("insert", content="x y")], 0)
    after, _ = apply_operation_set(state, [Operation("skip")], 1)
    assert after.items == state.items
    assert after.next_id == state.next_id
    assert after.step_count == 2


def test_out_of_order_step_raises():
    with pytest.raises(SequencingError):
        apply_operation_set(MemoryState(), [Operation("skip")], 1)


def test_unknown_target_rejected_without_aborting_step():
    ops = [
        Operation("delete", target_id=99),
        Operation("insert", content="kept"),
    ]
    state, report = apply_operation_set(MemoryState(), ops, 0)
    assert [o.applied for o in report.outcomes] == [False, True]
    assert report.outcomes[0].reason == "unknown_target"
    assert state.items[0].content == "kept"


def test_update_targeting_id_inserted_earlier_in_same_set_applies():
    ops = [
        Operation("insert", content="draft"),
        Operation("update", target_id=0, content="final"),
    ]
    state, report = apply_operation_set(MemoryState(), ops, 0)
    assert report.applied_count == 2
    assert state.items[0].content == "final"


def test_ids_never_reused_after_delete():
    state, _ = apply_operation_set(MemoryState(), [Operation("insert", content="a")], 0)
    state, _ = apply_operation_set(state, [Operation("delete", target_id=0)], 1)
    state, _ = apply_operation_set(state, [Operation("insert", content="b")], 2)
    assert list(state.items) == [1]
    assert state.next_id == 2


def test_origin_step_tracks_last_write():
    state, _ = apply_operation_set(MemoryState(), [Operation("skip")], 0)
    state, _ = apply_operation_set(state, [Operation("skip")], 1)
    state, _ = apply_operation_set(state, [Operation("insert", content="v1")], 2)
    state, _ = apply_operation_set(state, [Operation("skip")], 3)
    state, _ = apply_operation_set(state, [Operation("skip")], 4)
    assert origin_step(state, 0) == 2
    state, _ = apply_operation_set(state, [Operation("update", target_id=0, content="v2")], 5)
    assert origin_step(state, 0) == 5


def test_origin_step_unknown_id_raises():
    with pytest.raises(UnknownItemError):
        origin_step(MemoryState(), 7)


def test_memory_length_whitespace_counter():
    assert memory_length(MemoryState()) == 0
    state, _ = apply_operation_set(
        MemoryState(),
        [Operation("insert", content="a b c"), Operation("insert", content="d e")],
        0,
    )
    assert memory_length(state) == 5
    single, _ = apply_operation_set(MemoryState(), [Operation("insert", content="hello")], 0)
    assert memory_length(single) == 1


def test_memory_length_custom_counter():
    state, _ = apply_operation_set(MemoryState(), [Operation("insert", content="abc")], 0)
    assert memory_length(state, tokenizer=len) == 3


def test_whitespace_tokens():
    assert whitespace_tokens("") == 0
    assert whitespace_tokens("  a   b ") == 2


def test_serialize_round_trip_empty():
    s = MemoryState()
    assert deserialize_state(serialize_state(s)) == s


def test_serialize_round_trip_is_byte_identical():
    state, _ = apply_operation_set(
        MemoryState(),
        [Operation("insert", content="a"), Operation("insert", content="b"),
         Operation("insert", content="c")],
        0,
    )
    state, _ = apply_operation_set(state, [Operation("delete", target_id=1)], 1)
    text = serialize_state(state)
    again = serialize_state(deserialize_state(text))
    assert again == text


def test_deserialize_truncated_payload_reports_position():
    text = serialize_state(MemoryState())
    with pytest.raises(StateParseError) as exc:
        deserialize_state(text[: len(text) // 2])
    assert exc.value.position is not None


@pytest.mark.parametrize("payload", [
    "[]",
    '{"next_id": 0, "step_count": 0}',
    '{"next_id": 0, "step_count": 0, "items": [{"id": 0, "content": "x", "step": 0}]}',
    '{"next_id": 2, "step_count": 1, "items": [{"id": 0, "content": "x", "step": 0}, {"id": 0, "content": "y", "step": 0}]}',
])
def test_deserialize_rejects_inconsistent_payloads(payload):
    with pytest.raises(StateParseError):
        deserialize_state(payload)


def test_replay_determinism():
    from conftest import random_operation_sets

    rng = random.Random(11)
    op_sets = random_operation_sets(rng)
    first, _ = replay(op_sets)
    second, _ = replay(op_sets)
    assert first == second


def test_random_sequences_match_event_log_oracle():
    from conftest import random_operation_sets

    rng = random.Random(7)
    for _ in range(500):
        op_sets = random_operation_sets(rng)
        state, _ = replay(op_sets)
        records, next_id, step_count = replay_event_log(op_sets)
        assert state.next_id == next_id
        assert state.step_count == step_count
        assert [[it.id, it.content, it.step] for it in state.ordered_items()] == sorted(records)
        # provenance map agrees item by item
        assert {it.id: it.step for it in state.ordered_items()} == {r[0]: r[2] for r in records}
