"""Rollout harness: stream chunks through a manager agent, apply its
operations, evaluate chunk-level and global QA over retrieved memory,
and assemble a fully auditable trace with per-step reward breakdowns.

Trace file format: one JSON object per line, ``T`` step records (each
carrying the reward fields ``step, r_eara, r_fmt, r_chunk, r_comp,
total, nec`` at top level plus the raw manager output, parsed
operations, apply outcomes, memory snapshot hash and chunk QA scores)
followed by a footer record with rollout-level fields. Re-reading a
written trace reproduces it exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence, TextIO

from .agents import ManagerAgent, ReasonerAgent
from .scoring import JudgeAgent, score_prediction
from .memory import (
    ApplyReport,
    MemoryState,
    OpOutcome,
    Operation,
    apply_operation_set,
    memory_length,
    origin_step,
    serialize_state,
    whitespace_tokens,
)
from .ops import InvalidOp, OperationSet, parse_manager_output, validity_ratio
from .qa import SCOPE_GLOBAL, QAPair
from .retrieval import BM25Params, RetrievalIndex, build_index, retrieve_top_k
from .rewards import (
    EvidenceRecord,
    RewardWeights,
    StepRewardBreakdown,
    chunk_step_reward,
    compression_reward,
    compute_eara,
    compute_nec,
    global_reward,
    grpo_advantages,
    total_step_rewards,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RolloutConfig:
    retrieval_k: int = 5
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    chunk_qa_retrieval: bool = True  # condition chunk QA on top-k retrieval over the updated memory
    global_qa_frac: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")
        if not 0.0 < self.global_qa_frac <= 1.0:
            raise ValueError("global_qa_frac must be in (0,1]")

    def bm25_params(self) -> BM25Params:
        return BM25Params(k1=self.bm25_k1, b=self.bm25_b)


@dataclass(frozen=True)
class ChunkStream:
    """One instance: ordered chunks plus their QA annotations."""

    instance_id: str
    chunks: tuple[str, ...]
    chunk_qa: tuple[tuple[QAPair, ...], ...]
    global_qa: tuple[QAPair, ...]

    def __post_init__(self):
        if not self.chunks:
            raise ValueError("a stream needs at least one chunk")
        if len(self.chunk_qa) != len(self.chunks):
            raise ValueError("chunk_qa must have one (possibly empty) list per chunk")


def _qa_from_record(record: dict, scope: str, source_chunk: int | None) -> QAPair:
    return QAPair(
        question=record["question"],
        answer=record["answer"],
        scope=scope,
        metric=record.get("metric", "SubEM"),
        source_chunk=source_chunk,
    )


def stream_from_dict(payload: dict) -> ChunkStream:
    chunks = tuple(payload["chunks"])
    raw_chunk_qa = payload.get("chunk_qa") or [[] for _ in chunks]
    chunk_qa = tuple(
        tuple(_qa_from_record(r, "chunk-local", t) for r in per_chunk)
        for t, per_chunk in enumerate(raw_chunk_qa)
    )
    global_qa = tuple(_qa_from_record(r, SCOPE_GLOBAL, None) for r in payload.get("global_qa", []))
    return ChunkStream(
        instance_id=str(payload["instance_id"]),
        chunks=chunks,
        chunk_qa=chunk_qa,
        global_qa=global_qa,
    )


def load_streams(path: str) -> list[ChunkStream]:
    """Read newline-delimited instance objects."""
    streams = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                streams.append(stream_from_dict(json.loads(line)))
    return streams


@dataclass(frozen=True)
class StepRecord:
    step: int
    raw_output: str
    operation_set: OperationSet
    apply: ApplyReport
    snapshot_hash: str
    chunk_tokens: int
    chunk_scores: tuple[float, ...]
    rewards: StepRewardBreakdown


@dataclass(frozen=True)
class RolloutTrace:
    instance_id: str
    steps: tuple[StepRecord, ...]
    evidence: tuple[EvidenceRecord, ...]
    r_global: float | None
    memory_length_final: int | None
    weights: RewardWeights
    config: RolloutConfig
    config_fingerprint: str
    incomplete: bool = False
    faults: tuple[str, ...] = ()


def config_fingerprint(weights: RewardWeights, config: RolloutConfig) -> str:
    payload = json.dumps({"weights": asdict(weights), "config": asdict(config)},
                         sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def snapshot_hash(state: MemoryState) -> str:
    return hashlib.sha256(serialize_state(state).encode("utf-8")).hexdigest()


def _memory_items(state: MemoryState) -> list[tuple[int, str]]:
    return [(it.id, it.content) for it in state.ordered_items()]


def score_answer(prediction: str, pair: QAPair, judge: JudgeAgent | None = None) -> float:
    """Score a prediction against a QA pair under the pair's metric."""
    return score_prediction(prediction, pair.question, pair.answer, pair.metric, judge)


def _retrieve_items(state: MemoryState, index: RetrievalIndex | None, question: str,
                    k: int, use_retrieval: bool, query_id=None):
    if index is None or not use_retrieval:
        items = _memory_items(state)
        return items, [iid for iid, _ in items]
    hits = retrieve_top_k(index, question, k, query_id=query_id)
    items = [(key, state.items[key].content) for key, _ in hits.items]
    return items, [key for key, _ in hits.items]


def run_rollout(
    stream: ChunkStream,
    manager: ManagerAgent,
    reasoner: ReasonerAgent,
    weights: RewardWeights | None = None,
    config: RolloutConfig | None = None,
    judge: JudgeAgent | None = None,
) -> RolloutTrace:
    """Execute one full rollout and return its trace.

    Per step the manager sees the chunk and the rendered previous
    memory; its output is parsed, scored for formatting validity
    against the pre-step state, and applied. Chunk QA for the step is
    answered by the reasoner over retrieval against the updated memory.
    After the last step each (possibly subsampled) global question is
    answered over retrieval against the final memory, producing the
    evidence records that drive credit attribution.

    A manager endpoint failure aborts with a partial trace flagged
    incomplete; a reasoner failure on one question scores it 0 with a
    fault annotation.
    """
    weights = weights or RewardWeights()
    config = config or RolloutConfig()
    if not stream.global_qa:
        raise ValueError("a rollout must carry at least one global QA pair")

    fingerprint = config_fingerprint(weights, config)
    faults: list[str] = []
    state = MemoryState()

    partial: list[dict] = []  # per-step fields gathered before rewards are known
    fmt_vec: list[float] = []
    chunk_vec: list[float] = []

    for t, chunk in enumerate(stream.chunks):
        view = state.render()
        try:
            raw = manager.propose(chunk, view)
        except Exception as e:
            faults.append(f"step[{t}]: manager_error: {e}")
            logger.error("manager failed at step %d: %s", t, e)
            return RolloutTrace(
                instance_id=stream.instance_id,
                steps=_assemble_steps(partial, fmt_vec, chunk_vec, None, None, weights),
                evidence=(),
                r_global=None,
                memory_length_final=None,
                weights=weights,
                config=config,
                config_fingerprint=fingerprint,
                incomplete=True,
                faults=tuple(faults),
            )
        opset = parse_manager_output(raw)
        r_fmt = validity_ratio(opset, state)
        state, report = apply_operation_set(state, opset, t)

        index = build_index(_memory_items(state), config.bm25_params()) if state.items else None
        scores: list[float] = []
        for qi, pair in enumerate(stream.chunk_qa[t]):
            items, _ = _retrieve_items(state, index, pair.question,
                                       config.retrieval_k, config.chunk_qa_retrieval)
            try:
                prediction = reasoner.answer(pair.question, items)
                scores.append(score_answer(prediction, pair, judge))
            except Exception as e:
                faults.append(f"step[{t}].chunk_qa[{qi}]: reasoner_error: {e}")
                scores.append(0.0)

        fmt_vec.append(r_fmt)
        chunk_vec.append(chunk_step_reward(scores))
        partial.append({
            "step": t,
            "raw_output": raw,
            "operation_set": opset,
            "apply": report,
            "snapshot_hash": snapshot_hash(state),
            "chunk_tokens": whitespace_tokens(chunk),
            "chunk_scores": tuple(float(s) for s in scores),
        })

    # Global QA over the final memory.
    final_index = build_index(_memory_items(state), config.bm25_params()) if state.items else None
    question_indices = list(range(len(stream.global_qa)))
    if config.global_qa_frac < 1.0:
        rng = random.Random(config.seed)
        count = max(1, round(config.global_qa_frac * len(question_indices)))
        question_indices = sorted(rng.sample(question_indices, count))

    evidence: list[EvidenceRecord] = []
    for j in question_indices:
        pair = stream.global_qa[j]
        items, ids = _retrieve_items(state, final_index, pair.question,
                                     config.retrieval_k, True, query_id=j)
        try:
            prediction = reasoner.answer(pair.question, items)
            s_j = score_answer(prediction, pair, judge)
        except Exception as e:
            faults.append(f"global_qa[{j}]: reasoner_error: {e}")
            s_j = 0.0
        evidence.append(EvidenceRecord(
            question_index=j,
            score=float(s_j),
            retrieved_item_ids=tuple(ids),
            origin_steps=tuple(origin_step(state, i) for i in ids),
        ))

    r_global = global_reward([e.score for e in evidence])
    final_len = memory_length(state)

    return RolloutTrace(
        instance_id=stream.instance_id,
        steps=_assemble_steps(partial, fmt_vec, chunk_vec, evidence, r_global, weights,
                              final_len=final_len,
                              chunk_total=sum(p["chunk_tokens"] for p in partial)),
        evidence=tuple(evidence),
        r_global=r_global,
        memory_length_final=final_len,
        weights=weights,
        config=config,
        config_fingerprint=fingerprint,
        incomplete=False,
        faults=tuple(faults),
    )


def _assemble_steps(partial, fmt_vec, chunk_vec, evidence, r_global, weights,
                    final_len=None, chunk_total=None) -> tuple[StepRecord, ...]:
    T = len(partial)
    if T == 0:
        return ()
    if evidence is None or r_global is None:
        # Incomplete rollout: record what is known, zero the attribution.
        breakdowns = total_step_rewards([0.0] * T, fmt_vec, chunk_vec, 0.0, weights,
                                        nec=[0.0] * T)
    else:
        nec = compute_nec(evidence, T)
        eara = compute_eara(nec, r_global, weights.beta, T)
        r_comp = compression_reward(final_len, chunk_total)
        breakdowns = total_step_rewards(eara.tolist(), fmt_vec, chunk_vec, r_comp, weights,
                                        nec=nec.tolist())
    return tuple(
        StepRecord(rewards=b, **p) for p, b in zip(partial, breakdowns)
    )


# ---------------------------------------------------------------------------
# Grouped rollouts (per-step advantage groups)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupResult:
    traces: tuple[RolloutTrace, ...]
    # advantages[t][g]: advantage of rollout g at step t
    advantages: tuple[tuple[float, ...], ...]


def run_group(
    stream: ChunkStream,
    manager_factory: Callable[[int], ManagerAgent],
    reasoner: ReasonerAgent,
    weights: RewardWeights | None = None,
    config: RolloutConfig | None = None,
    group_size: int = 8,
    judge: JudgeAgent | None = None,
) -> GroupResult:
    """Run ``group_size`` rollouts of one stream and form per-step groups.

    The advantage of rollout g at step t standardizes the step totals
    across the group at that step.
    """
    if group_size < 2:
        raise ValueError("group_size must be >= 2")
    weights = weights or RewardWeights()
    traces = tuple(
        run_rollout(stream, manager_factory(g), reasoner, weights, config, judge)
        for g in range(group_size)
    )
    T = len(stream.chunks)
    advantages = tuple(
        tuple(grpo_advantages([tr.steps[t].rewards.total for tr in traces], weights.epsilon))
        for t in range(T)
    )
    return GroupResult(traces=traces, advantages=advantages)


# ---------------------------------------------------------------------------
# Trace serialization
# ---------------------------------------------------------------------------


def _step_to_record(s: StepRecord) -> dict:
    return {
        "type": "step",
        "step": s.step,
        "r_eara": s.rewards.r_eara,
        "r_fmt": s.rewards.r_fmt,
        "r_chunk": s.rewards.r_chunk,
        "r_comp": s.rewards.r_comp,
        "total": s.rewards.total,
        "nec": s.rewards.nec,
        "raw_output": s.raw_output,
        "parsed_ops": [
            {"kind": op.kind, "target_id": op.target_id, "content": op.content}
            for op in s.operation_set.parsed
        ],
        "invalid_ops": [
            {"index": e.index, "reason": e.reason, "detail": e.detail}
            for e in s.operation_set.invalid
        ],
        "apply": [
            {"index": o.index, "applied": o.applied, "reason": o.reason, "item_id": o.item_id}
            for o in s.apply.outcomes
        ],
        "snapshot": s.snapshot_hash,
        "chunk_tokens": s.chunk_tokens,
        "chunk_scores": list(s.chunk_scores),
    }


def _step_from_record(r: dict) -> StepRecord:
    opset = OperationSet(
        raw_text=r["raw_output"],
        parsed=tuple(Operation(kind=o["kind"], target_id=o["target_id"], content=o["content"])
                     for o in r["parsed_ops"]),
        invalid=tuple(InvalidOp(index=e["index"], reason=e["reason"], detail=e["detail"])
                      for e in r["invalid_ops"]),
    )
    report = ApplyReport(
        step=r["step"],
        outcomes=tuple(OpOutcome(index=o["index"], applied=o["applied"], reason=o["reason"],
                                 item_id=o["item_id"]) for o in r["apply"]),
    )
    rewards = StepRewardBreakdown(
        step=r["step"], r_eara=r["r_eara"], r_fmt=r["r_fmt"], r_chunk=r["r_chunk"],
        r_comp=r["r_comp"], total=r["total"], nec=r["nec"],
    )
    return StepRecord(
        step=r["step"],
        raw_output=r["raw_output"],
        operation_set=opset,
        apply=report,
        snapshot_hash=r["snapshot"],
        chunk_tokens=r["chunk_tokens"],
        chunk_scores=tuple(r["chunk_scores"]),
        rewards=rewards,
    )


def write_trace(trace: RolloutTrace, out: TextIO) -> None:
    for s in trace.steps:
        out.write(json.dumps(_step_to_record(s), ensure_ascii=False, separators=(",", ":")) + "\n")
    footer = {
        "type": "footer",
        "instance_id": trace.instance_id,
        "r_global": trace.r_global,
        "memory_length_final": trace.memory_length_final,
        "evidence": [
            {
                "question_index": e.question_index,
                "score": e.score,
                "retrieved_item_ids": list(e.retrieved_item_ids),
                "origin_steps": list(e.origin_steps),
            }
            for e in trace.evidence
        ],
        "weights": asdict(trace.weights),
        "config": asdict(trace.config),
        "config_fingerprint": trace.config_fingerprint,
        "incomplete": trace.incomplete,
        "faults": list(trace.faults),
    }
    out.write(json.dumps(footer, ensure_ascii=False, separators=(",", ":")) + "\n")


def write_trace_file(trace: RolloutTrace, path: str, append: bool = False) -> None:
    with open(path, "a" if append else "w", encoding="utf-8") as f:
        write_trace(trace, f)


def read_traces(path: str) -> list[RolloutTrace]:
    traces = []
    steps: list[StepRecord] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            record = json.loads(line)
            if record["type"] == "step":
                steps.append(_step_from_record(record))
            elif record["type"] == "footer":
                traces.append(RolloutTrace(
                    instance_id=record["instance_id"],
                    steps=tuple(steps),
                    evidence=tuple(
                        EvidenceRecord(
                            question_index=e["question_index"],
                            score=e["score"],
                            retrieved_item_ids=tuple(e["retrieved_item_ids"]),
                            origin_steps=tuple(e["origin_steps"]),
                        )
                        for e in record["evidence"]
                    ),
                    r_global=record["r_global"],
                    memory_length_final=record["memory_length_final"],
                    weights=RewardWeights(**record["weights"]),
                    config=RolloutConfig(**record["config"]),
                    config_fingerprint=record["config_fingerprint"],
                    incomplete=record["incomplete"],
                    faults=tuple(record["faults"]),
                ))
                steps = []
            else:
                raise ValueError(f"unknown trace record type {record['type']!r}")
    if steps:
        raise ValueError("trailing step records without a footer")
    return traces


def read_trace(path: str) -> RolloutTrace:
    traces = read_traces(path)
    if len(traces) != 1:
        raise ValueError(f"expected exactly one trace, found {len(traces)}")
    return traces[0]


# ---------------------------------------------------------------------------
# Audit: recompute every reward component and diff against the trace
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditDiff:
    field: str
    step: int | None
    stored: float | str | None
    recomputed: float | str | None


def audit_trace(trace: RolloutTrace) -> list[AuditDiff]:
    """Replay operations and recompute all rewards; return the diffs.

    An empty result means the trace is internally consistent: snapshots,
    formatting ratios, chunk rewards, evidence attribution, compression
    and totals all reproduce exactly.
    """
    diffs: list[AuditDiff] = []
    state = MemoryState()
    fmt_vec: list[float] = []
    chunk_vec: list[float] = []
    for s in trace.steps:
        r_fmt = validity_ratio(s.operation_set, state)
        state, _ = apply_operation_set(state, s.operation_set, s.step)
        snap = snapshot_hash(state)
        if snap != s.snapshot_hash:
            diffs.append(AuditDiff("snapshot", s.step, s.snapshot_hash, snap))
        if r_fmt != s.rewards.r_fmt:
            diffs.append(AuditDiff("r_fmt", s.step, s.rewards.r_fmt, r_fmt))
        r_chunk = chunk_step_reward(list(s.chunk_scores))
        if r_chunk != s.rewards.r_chunk:
            diffs.append(AuditDiff("r_chunk", s.step, s.rewards.r_chunk, r_chunk))
        fmt_vec.append(r_fmt)
        chunk_vec.append(r_chunk)

    if trace.incomplete:
        return diffs

    final_len = memory_length(state)
    if final_len != trace.memory_length_final:
        diffs.append(AuditDiff("memory_length_final", None, trace.memory_length_final, final_len))

    r_global = global_reward([e.score for e in trace.evidence])
    if r_global != trace.r_global:
        diffs.append(AuditDiff("r_global", None, trace.r_global, r_global))

    T = len(trace.steps)
    nec = compute_nec(trace.evidence, T)
    eara = compute_eara(nec, r_global, trace.weights.beta, T)
    chunk_total = sum(s.chunk_tokens for s in trace.steps)
    r_comp = compression_reward(final_len, chunk_total)
    breakdowns = total_step_rewards(eara.tolist(), fmt_vec, chunk_vec, r_comp, trace.weights,
                                    nec=nec.tolist())
    for s, b in zip(trace.steps, breakdowns):
        for name in ("r_eara", "r_comp", "total", "nec"):
            stored = getattr(s.rewards, name)
            fresh = getattr(b, name)
            if stored != fresh:
                diffs.append(AuditDiff(name, s.step, stored, fresh))
    return diffs
