"""Reward components and group-relative advantages.

The per-step reward for a rollout of T chunk steps scored by n global
questions is

    r_t = r_eara(t) + r_fmt(t) + w1 * r_chunk(t) + w2 * r_comp

where r_eara redistributes the global reward across steps,

    N_t     = sum_j sum_{m in M_j, origin(m)=t} s_j / (|M_j| * n)
    r_eara  = (1 - beta) * r_global / T + beta * N_t

so that sum_t r_eara(t) == r_global exactly (conservation). Advantages
standardize a group of rewards: A_j = (r_j - mean) / (std + epsilon)
with population standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels


class ConsistencyError(ValueError):
    """Evidence refers to a step outside the rollout."""


@dataclass(frozen=True)
class RewardWeights:
    """Composition weights plus per-component enable flags.

    Disabling a flag zeroes that component's contribution to the total;
    evidence attribution itself is tuned through ``beta`` (0 = uniform
    credit only).
    """

    w1: float = 0.5
    w2: float = 0.05
    beta: float = 0.5
    epsilon: float = 1e-8
    fmt_enabled: bool = True
    chunk_enabled: bool = True
    comp_enabled: bool = True

    def __post_init__(self):
        for name in ("w1", "w2", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class EvidenceRecord:
    """Evidence for one global question: its score and the items used."""

    question_index: int
    score: float
    retrieved_item_ids: tuple[int, ...]
    origin_steps: tuple[int, ...]

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0,1], got {self.score}")
        if len(self.retrieved_item_ids) != len(self.origin_steps):
            raise ValueError("retrieved_item_ids and origin_steps must align")


@dataclass(frozen=True)
class StepRewardBreakdown:
    step: int
    r_eara: float
    r_fmt: float
    r_chunk: float
    r_comp: float
    total: float
    nec: float | None = None


def chunk_step_reward(scores: Sequence[float]) -> float:
    """Mean of the chunk-QA scores for one step; 0 when no QA exists."""
    if not scores:
        return 0.0
    for s in scores:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"chunk QA score out of range: {s}")
    return sum(scores) / len(scores)


def global_reward(scores: Sequence[float]) -> float:
    """Mean score over the global QA set; requires at least one score."""
    if not scores:
        raise ValueError("a rollout must carry at least one global QA score")
    for s in scores:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"global QA score out of range: {s}")
    return sum(scores) / len(scores)


def compute_nec(records: Sequence[EvidenceRecord], T: int) -> np.ndarray:
    """Per-step normalized evidence contribution vector of length T.

    Each question's score is split evenly over its (deduplicated)
    retrieved items and credited to the items' origin steps, normalized
    by the question count. A question that retrieved nothing cannot
    anchor its mass to any step; that orphaned mass is spread uniformly
    over all steps so the totals still sum to the mean score.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    n = len(records)
    if n < 1:
        raise ValueError("at least one evidence record is required")
    steps: list[int] = []
    weights: list[float] = []
    orphaned = 0.0
    for rec in records:
        seen: dict[int, int] = {}
        for item_id, step in zip(rec.retrieved_item_ids, rec.origin_steps):
            if item_id not in seen:
                seen[item_id] = step
        if not seen:
            orphaned += rec.score / n
            continue
        share = rec.score / (len(seen) * n)
        for step in seen.values():
            if not 0 <= step < T:
                raise ConsistencyError(f"origin step {step} outside rollout of {T} steps")
            steps.append(step)
            weights.append(share)
    nec = kernels.scatter_add(
        np.array(steps, dtype=np.int64), np.array(weights, dtype=np.float64), T
    )
    if orphaned:
        nec = nec + orphaned / T
    return nec


def compute_eara(N: Sequence[float], r_global: float, beta: float, T: int) -> np.ndarray:
    """Blend uniform participation credit with evidence-driven credit.

    At beta=0 the vector is exactly uniform (r_global/T per step); at
    beta=1 it is exactly N.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0,1], got {beta}")
    N = np.asarray(N, dtype=np.float64)
    if N.shape != (T,):
        raise ValueError(f"N must have length {T}, got shape {N.shape}")
    return (1.0 - beta) * (r_global / T) + beta * N


def compression_reward(mem_len_final: int, chunk_len_total: int) -> float:
    """One minus the final-memory to cumulative-input length ratio, in [0,1]."""
    if chunk_len_total < 1:
        raise ValueError("chunk_len_total must be >= 1")
    raw = 1.0 - mem_len_final / chunk_len_total
    return min(1.0, max(0.0, raw))


def total_step_rewards(
    eara: Sequence[float],
    fmt: Sequence[float],
    chunk: Sequence[float],
    r_comp: float,
    weights: RewardWeights,
    nec: Sequence[float] | None = None,
) -> list[StepRewardBreakdown]:
    """Elementwise weighted composition of the per-step components.

    ``r_comp`` is a rollout-level quantity applied identically at every
    step. Vectors must share one length.
    """
    T = len(eara)
    if len(fmt) != T or len(chunk) != T or (nec is not None and len(nec) != T):
        raise ValueError(
            f"component length mismatch: eara={len(eara)} fmt={len(fmt)} chunk={len(chunk)}"
        )
    out = []
    for t in range(T):
        r_fmt = float(fmt[t]) if weights.fmt_enabled else 0.0
        r_chunk = float(chunk[t]) if weights.chunk_enabled else 0.0
        comp = float(r_comp) if weights.comp_enabled else 0.0
        r_eara = float(eara[t])
        total = r_eara + r_fmt + weights.w1 * r_chunk + weights.w2 * comp
        out.append(
            StepRewardBreakdown(
                step=t,
                r_eara=r_eara,
                r_fmt=r_fmt,
                r_chunk=r_chunk,
                r_comp=comp,
                total=total,
                nec=float(nec[t]) if nec is not None else None,
            )
        )
    return out


def grpo_advantages(group_rewards: Sequence[float], epsilon: float) -> list[float]:
    """Group-standardized rewards ``(r - mean) / (std + epsilon)``.

    Population standard deviation. A zero-variance group (all rewards
    equal) yields exactly zero advantages.
    """
    G = len(group_rewards)
    if G < 2:
        raise ValueError(f"a group needs at least 2 rewards, got {G}")
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    arr = np.asarray(group_rewards, dtype=np.float64)
    if float(arr.min()) == float(arr.max()):
        return [0.0] * G
    mu = float(arr.mean())
    sigma = float(arr.std())
    return [(float(r) - mu) / (sigma + epsilon) for r in arr]


def conservation_gap(eara: Sequence[float], r_global: float) -> float:
    """Absolute difference between the step-reward sum and the global reward."""
    return abs(math.fsum(float(x) for x in eara) - r_global)
