"""Chunk-level QA dataset construction.

Pipeline per chunk: a teacher agent proposes factoid question/answer
candidates, a verifier agent answers each question from the chunk text
alone (pairs the verifier cannot ground are discarded), questions seen
earlier in the instance are dropped, and at most K pairs are kept in
teacher emission order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TextIO

from .agents import TeacherAgent, VerifierAgent
from .scoring import METRIC_SUBEM, METRICS, normalize_answer, subem_score

logger = logging.getLogger(__name__)

SCOPE_CHUNK = "chunk-local"
SCOPE_GLOBAL = "global"

DEFAULT_BUDGET = 5

Matcher = Callable[[str, str], bool]


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    scope: str = SCOPE_CHUNK
    metric: str = METRIC_SUBEM
    source_chunk: int | None = None

    def __post_init__(self):
        if not self.question.strip() or not self.answer.strip():
            raise ValueError("question and answer must be non-empty")
        if self.scope not in (SCOPE_CHUNK, SCOPE_GLOBAL):
            raise ValueError(f"scope must be {SCOPE_CHUNK}|{SCOPE_GLOBAL}, got {self.scope!r}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.scope == SCOPE_CHUNK and self.source_chunk is None:
            raise ValueError("chunk-local pairs must carry a source_chunk")


def normalized_question(pair: QAPair) -> str:
    """Dedup key: whitespace-normalized, lowercased question text."""
    return normalize_answer(pair.question)


def default_matcher(verifier_answer: str, gold: str) -> bool:
    """Substring containment of the gold answer, case-insensitive."""
    return subem_score(verifier_answer, gold) == 1.0


def generate_candidates(chunk: str, teacher: TeacherAgent, source_chunk: int = 0) -> list[QAPair]:
    """Parse the teacher's structured response into candidate pairs.

    Teacher failures and malformed payloads degrade to an empty list
    with a warning; training data just gets fewer pairs.
    """
    if not chunk.strip():
        raise ValueError("chunk must be non-empty")
    try:
        raw = teacher.generate(chunk)
    except Exception as e:
        logger.warning("teacher failed on chunk %d: %s", source_chunk, e)
        return []
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError:
        logger.warning("teacher payload is not JSON on chunk %d", source_chunk)
        return []
    if not isinstance(payload, list):
        logger.warning("teacher payload is not an array on chunk %d", source_chunk)
        return []
    pairs = []
    for entry in payload:
        if not isinstance(entry, dict):
            continue
        question = entry.get("question")
        answer = entry.get("answer")
        if not isinstance(question, str) or not isinstance(answer, str):
            continue
        if not question.strip() or not answer.strip():
            continue
        metric = entry.get("metric", METRIC_SUBEM)
        if metric not in METRICS:
            metric = METRIC_SUBEM
        pairs.append(QAPair(question=question, answer=answer, scope=SCOPE_CHUNK,
                            metric=metric, source_chunk=source_chunk))
    return pairs


def verify_pair(pair: QAPair, chunk: str, verifier: VerifierAgent,
                matcher: Matcher = default_matcher) -> bool:
    """True iff the verifier's chunk-only answer matches the gold answer.

    A verifier failure discards the pair (returns False) with a warning.
    """
    if pair.scope != SCOPE_CHUNK:
        raise ValueError("only chunk-local pairs are verified against a chunk")
    try:
        predicted = verifier.answer_from_chunk(pair.question, chunk)
    except Exception as e:
        logger.warning("verifier failed on %r: %s", pair.question, e)
        return False
    return matcher(predicted, pair.answer)


def dedup_select(verified: Sequence[QAPair], history: set[str], k: int = DEFAULT_BUDGET) -> list[QAPair]:
    """Keep the first K history-unique pairs, adding them to ``history``.

    The dedup key is the normalized question text; selection preserves
    teacher emission order. ``history`` is updated in place.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    selected: list[QAPair] = []
    for pair in verified:
        if len(selected) == k:
            break
        key = normalized_question(pair)
        if key in history:
            continue
        history.add(key)
        selected.append(pair)
    return selected


def build_dataset(chunks: Sequence[str], teacher: TeacherAgent, verifier: VerifierAgent,
                  k: int = DEFAULT_BUDGET, matcher: Matcher = default_matcher) -> list[list[QAPair]]:
    """Per-chunk QA sets for one instance, budget K per chunk.

    Chunks are processed in order with a shared dedup history. Every
    verified pair enters the history, selected or not, so a question
    already seen for an earlier chunk never reappears even when that
    chunk over-produced beyond its budget.
    """
    if not chunks:
        raise ValueError("instance must contain at least one chunk")
    history: set[str] = set()
    per_chunk: list[list[QAPair]] = []
    for t, chunk in enumerate(chunks):
        candidates = generate_candidates(chunk, teacher, source_chunk=t)
        verified = [p for p in candidates if verify_pair(p, chunk, verifier, matcher)]
        per_chunk.append(dedup_select(verified, history, k))
        for pair in verified:
            history.add(normalized_question(pair))
    return per_chunk


def dataset_records(instance_id: str, per_chunk: Sequence[Sequence[QAPair]]) -> Iterable[dict]:
    for chunk_index, pairs in enumerate(per_chunk):
        for pair in pairs:
            yield {
                "instance_id": instance_id,
                "chunk_index": chunk_index,
                "question": pair.question,
                "answer": pair.answer,
                "metric": pair.metric,
                "scope": pair.scope,
            }


def write_dataset(out: TextIO, instance_id: str, per_chunk: Sequence[Sequence[QAPair]]) -> int:
    """Write newline-delimited dataset records; returns the record count."""
    count = 0
    for record in dataset_records(instance_id, per_chunk):
        out.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n")
        count += 1
    return count


def read_dataset(lines: Iterable[str]) -> list[dict]:
    return [json.loads(line) for line in lines if line.strip()]
