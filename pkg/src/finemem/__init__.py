"""Memory-management and reward-attribution engine for RL-trained
memory manager agents: a single-layer operation-driven memory store,
chunk-level and evidence-anchored rewards with exact conservation,
group-relative advantages, and a rollout harness with pluggable agents.
"""

__version__ = "0.1.0"

from .memory import (
    ApplyReport,
    MemoryItem,
    MemoryState,
    Operation,
    apply_operation_set,
    deserialize_state,
    memory_length,
    origin_step,
    serialize_state,
)
from .ops import OperationSet, parse_manager_output, validate_operation, validity_ratio
from .qa import QAPair, build_dataset, dedup_select, generate_candidates, verify_pair
from .retrieval import BM25Params, bm25_score, build_index, rag_top_k, retrieve_top_k
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
from .rollout import (
    ChunkStream,
    RolloutConfig,
    RolloutTrace,
    audit_trace,
    read_trace,
    run_group,
    run_rollout,
    score_answer,
    write_trace_file,
)

__all__ = [
    "ApplyReport",
    "BM25Params",
    "ChunkStream",
    "EvidenceRecord",
    "MemoryItem",
    "MemoryState",
    "Operation",
    "OperationSet",
    "QAPair",
    "RewardWeights",
    "RolloutConfig",
    "RolloutTrace",
    "StepRewardBreakdown",
    "apply_operation_set",
    "audit_trace",
    "bm25_score",
    "build_dataset",
    "build_index",
    "chunk_step_reward",
    "compression_reward",
    "compute_eara",
    "compute_nec",
    "dedup_select",
    "deserialize_state",
    "generate_candidates",
    "global_reward",
    "grpo_advantages",
    "memory_length",
    "origin_step",
    "parse_manager_output",
    "rag_top_k",
    "read_trace",
    "retrieve_top_k",
    "run_group",
    "run_rollout",
    "score_answer",
    "serialize_state",
    "total_step_rewards",
    "validate_operation",
    "validity_ratio",
    "verify_pair",
    "write_trace_file",
]
