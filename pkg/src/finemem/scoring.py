"""Answer scoring: substring match, exact match, keyword recall, judge.

Normalization for the string metrics: lowercase, replace ASCII
punctuation with spaces, collapse runs of whitespace.
"""

from __future__ import annotations

import logging
import string
from typing import Protocol

logger = logging.getLogger(__name__)

METRIC_SUBEM = "SubEM"
METRIC_EM = "EM"
METRIC_KWHIT = "KWHit"
METRIC_JUDGE = "Judge"

METRICS = (METRIC_SUBEM, METRIC_EM, METRIC_KWHIT, METRIC_JUDGE)

_PUNCT_TO_SPACE = str.maketrans({c: " " for c in string.punctuation})


class JudgeAgent(Protocol):
    def judge(self, question: str, gold: str, prediction: str) -> float: ...


def normalize_answer(text: str) -> str:
    return " ".join(text.lower().translate(_PUNCT_TO_SPACE).split())


def subem_score(prediction: str, gold: str) -> float:
    """1.0 iff the normalized gold answer appears inside the prediction."""
    g = normalize_answer(gold)
    if not g:
        return 0.0
    return 1.0 if g in normalize_answer(prediction) else 0.0


def em_score(prediction: str, gold: str) -> float:
    g = normalize_answer(gold)
    if not g:
        return 0.0
    return 1.0 if normalize_answer(prediction) == g else 0.0


def kw_hit_score(prediction: str, gold: str) -> float:
    """Fraction of gold answer terms present among prediction tokens."""
    keywords = normalize_answer(gold).split()
    if not keywords:
        return 0.0
    pred_tokens = set(normalize_answer(prediction).split())
    return sum(1 for k in keywords if k in pred_tokens) / len(keywords)


def score_prediction(prediction: str, question: str, gold: str, metric: str,
                     judge: JudgeAgent | None = None) -> float:
    """Score a prediction in [0,1] under the pair's metric.

    Judge scoring is delegated to the configured judge endpoint; a judge
    failure scores 0 (callers annotate the fault).
    """
    if metric == METRIC_SUBEM:
        return subem_score(prediction, gold)
    if metric == METRIC_EM:
        return em_score(prediction, gold)
    if metric == METRIC_KWHIT:
        return kw_hit_score(prediction, gold)
    if metric == METRIC_JUDGE:
        if judge is None:
            raise ValueError("Judge metric requires a judge endpoint")
        try:
            raw = judge.judge(question, gold, prediction)
        except Exception as e:
            logger.warning("judge endpoint failed, scoring 0: %s", e)
            return 0.0
        return min(1.0, max(0.0, float(raw)))
    raise ValueError(f"unknown metric {metric!r}")
