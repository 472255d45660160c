"""Hot numeric kernels: numba-jitted fast path with a pure-numpy fallback.

The two inner loops that dominate runtime live here: BM25 score
accumulation over postings (one entry per query-term occurrence per
matching document) and the scatter-add that folds per-item evidence
credit into per-step totals.

Backend selection is controlled by the FINEMEM_KERNELS environment
variable: "numba" (require numba, fail loudly if missing), "numpy"
(force the fallback), or "auto" (default: numba when importable).
"""

from __future__ import annotations

import os

import numpy as np


def _pick_backend() -> str:
    mode = os.environ.get("FINEMEM_KERNELS", "auto").strip().lower()
    if mode not in ("auto", "numba", "numpy"):
        raise ValueError(f"FINEMEM_KERNELS must be auto|numba|numpy, got {mode!r}")
    if mode == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if mode == "numba":
            raise
        return "numpy"
    return "numba"


_BACKEND = _pick_backend()


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return _BACKEND


def scatter_add_numpy(indices: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size, dtype=np.float64)
    np.add.at(out, indices, values)
    return out


def bm25_accumulate_numpy(
    post_doc: np.ndarray,
    post_tf: np.ndarray,
    post_idf: np.ndarray,
    doc_len: np.ndarray,
    avgdl: float,
    k1: float,
    b: float,
) -> np.ndarray:
    scores = np.zeros(doc_len.shape[0], dtype=np.float64)
    if post_doc.shape[0] == 0:
        return scores
    denom = post_tf + k1 * (1.0 - b + b * doc_len[post_doc] / avgdl)
    np.add.at(scores, post_doc, post_idf * post_tf * (k1 + 1.0) / denom)
    return scores


if _BACKEND == "numba":
    from numba import njit

    @njit(cache=True)
    def _scatter_add_jit(indices, values, size):  # pragma: no cover - thin jit wrapper
        out = np.zeros(size, dtype=np.float64)
        for i in range(indices.shape[0]):
            out[indices[i]] += values[i]
        return out

    @njit(cache=True)
    def _bm25_accumulate_jit(post_doc, post_tf, post_idf, doc_len, avgdl, k1, b):  # pragma: no cover
        scores = np.zeros(doc_len.shape[0], dtype=np.float64)
        for i in range(post_doc.shape[0]):
            d = post_doc[i]
            tf = post_tf[i]
            denom = tf + k1 * (1.0 - b + b * doc_len[d] / avgdl)
            scores[d] += post_idf[i] * tf * (k1 + 1.0) / denom
        return scores

    def scatter_add_numba(indices: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
        return _scatter_add_jit(np.ascontiguousarray(indices, dtype=np.int64),
                                np.ascontiguousarray(values, dtype=np.float64), size)

    def bm25_accumulate_numba(post_doc, post_tf, post_idf, doc_len, avgdl, k1, b):
        return _bm25_accumulate_jit(
            np.ascontiguousarray(post_doc, dtype=np.int64),
            np.ascontiguousarray(post_tf, dtype=np.float64),
            np.ascontiguousarray(post_idf, dtype=np.float64),
            np.ascontiguousarray(doc_len, dtype=np.float64),
            float(avgdl), float(k1), float(b))

    scatter_add = scatter_add_numba
    bm25_accumulate = bm25_accumulate_numba
else:
    scatter_add = scatter_add_numpy
    bm25_accumulate = bm25_accumulate_numpy


def warmup() -> None:
    """Trigger JIT compilation so timed sections do not pay compile cost."""
    idx = np.array([0, 1, 1], dtype=np.int64)
    val = np.array([1.0, 0.5, 0.25], dtype=np.float64)
    scatter_add(idx, val, 3)
    bm25_accumulate(idx, val, val, np.ones(3), 1.0, 1.2, 0.75)
