"""Okapi BM25 indexing and top-k retrieval.

Tokenization contract (bit-exact): lowercase the text, replace every
ASCII punctuation character (``string.punctuation``) with a space, then
split on whitespace. No stemming, no stop words.

Scoring uses the non-negative idf variant
``idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`` so scores are never
negative and zero-evidence documents can be excluded cleanly.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from . import kernels

_PUNCT_TO_SPACE = str.maketrans({c: " " for c in string.punctuation})

DocKey = Hashable


def tokenize(text: str) -> list[str]:
    """Lowercase, strip ASCII punctuation to spaces, split on whitespace."""
    return text.lower().translate(_PUNCT_TO_SPACE).split()


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.2
    b: float = 0.75


class UnknownDocError(KeyError):
    """Score requested for a key the index does not hold."""


@dataclass
class RetrievalIndex:
    keys: list[DocKey]
    doc_len: np.ndarray
    avg_doc_len: float
    doc_frequencies: dict[str, int]
    params: BM25Params
    # per-term postings: term -> (doc index array, term frequency array)
    _postings: dict[str, tuple[np.ndarray, np.ndarray]] = field(repr=False, default_factory=dict)
    _idf: dict[str, float] = field(repr=False, default_factory=dict)
    _key_pos: dict[DocKey, int] = field(repr=False, default_factory=dict)

    def __len__(self) -> int:
        return len(self.keys)


@dataclass(frozen=True)
class RetrievedSet:
    query_id: Hashable
    items: tuple[tuple[DocKey, float], ...]

    def keys(self) -> list[DocKey]:
        return [k for k, _ in self.items]


def build_index(docs: Sequence[tuple[DocKey, str]], params: BM25Params | None = None) -> RetrievalIndex:
    """Index a corpus of ``(key, text)`` documents.

    Duplicate keys are last-write-wins. An empty corpus yields an index
    whose queries return nothing.
    """
    params = params or BM25Params()
    by_key: dict[DocKey, str] = {}
    for key, text in docs:
        by_key[key] = text
    keys = list(by_key)
    token_lists = [tokenize(by_key[k]) for k in keys]
    n = len(keys)
    doc_len = np.array([len(toks) for toks in token_lists], dtype=np.float64)
    avgdl = float(doc_len.mean()) if n else 0.0

    df: dict[str, int] = {}
    tf_maps: list[dict[str, int]] = []
    for toks in token_lists:
        tf: dict[str, int] = {}
        for t in toks:
            tf[t] = tf.get(t, 0) + 1
        tf_maps.append(tf)
        for t in tf:
            df[t] = df.get(t, 0) + 1

    postings: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    idf: dict[str, float] = {}
    acc: dict[str, tuple[list[int], list[float]]] = {t: ([], []) for t in df}
    for d, tf in enumerate(tf_maps):
        for t, count in tf.items():
            acc[t][0].append(d)
            acc[t][1].append(float(count))
    for t, (doc_ids, tfs) in acc.items():
        postings[t] = (np.array(doc_ids, dtype=np.int64), np.array(tfs, dtype=np.float64))
        idf[t] = math.log(1.0 + (n - df[t] + 0.5) / (df[t] + 0.5))

    return RetrievalIndex(
        keys=keys,
        doc_len=doc_len,
        avg_doc_len=avgdl,
        doc_frequencies=df,
        params=params,
        _postings=postings,
        _idf=idf,
        _key_pos={k: i for i, k in enumerate(keys)},
    )


def bm25_score(index: RetrievalIndex, query_terms: Sequence[str], doc_key: DocKey) -> float:
    """Okapi BM25 score of one document for a tokenized query.

    Each query-term occurrence contributes
    ``idf(t) * tf * (k1+1) / (tf + k1 * (1 - b + b * dl/avgdl))``;
    terms absent from the document (or the index) contribute 0.
    """
    if doc_key not in index._key_pos:
        raise UnknownDocError(doc_key)
    d = index._key_pos[doc_key]
    k1, b = index.params.k1, index.params.b
    dl = float(index.doc_len[d])
    score = 0.0
    for term in query_terms:
        posting = index._postings.get(term)
        if posting is None:
            continue
        doc_ids, tfs = posting
        hit = np.searchsorted(doc_ids, d)
        if hit >= len(doc_ids) or doc_ids[hit] != d:
            continue
        tf = float(tfs[hit])
        denom = tf + k1 * (1.0 - b + b * dl / index.avg_doc_len)
        score += index._idf[term] * tf * (k1 + 1.0) / denom
    return score


def score_all(index: RetrievalIndex, query_terms: Sequence[str]) -> np.ndarray:
    """BM25 scores of the full corpus for a tokenized query (kernel path)."""
    n = len(index.keys)
    if n == 0:
        return np.zeros(0, dtype=np.float64)
    doc_chunks: list[np.ndarray] = []
    tf_chunks: list[np.ndarray] = []
    idf_chunks: list[np.ndarray] = []
    for term in query_terms:
        posting = index._postings.get(term)
        if posting is None:
            continue
        doc_ids, tfs = posting
        doc_chunks.append(doc_ids)
        tf_chunks.append(tfs)
        idf_chunks.append(np.full(len(doc_ids), index._idf[term], dtype=np.float64))
    if not doc_chunks:
        return np.zeros(n, dtype=np.float64)
    return kernels.bm25_accumulate(
        np.concatenate(doc_chunks),
        np.concatenate(tf_chunks),
        np.concatenate(idf_chunks),
        index.doc_len,
        index.avg_doc_len,
        index.params.k1,
        index.params.b,
    )


def retrieve_top_k(index: RetrievalIndex, query: str, k: int, query_id: Hashable = None) -> RetrievedSet:
    """Top-k positively-scoring documents, score-descending.

    Returns fewer than ``k`` results when fewer documents score above
    zero. Ties break by ascending document key.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = score_all(index, tokenize(query))
    hits = [(index.keys[d], float(scores[d])) for d in np.nonzero(scores > 0.0)[0]]
    hits.sort(key=lambda pair: (-pair[1], pair[0]))
    return RetrievedSet(query_id=query_id, items=tuple(hits[:k]))


def rag_top_k(chunks: Sequence[str], query: str, k: int = 2, params: BM25Params | None = None) -> RetrievedSet:
    """Chunk-retrieval baseline: BM25 over raw chunks, keys are indices."""
    index = build_index(list(enumerate(chunks)), params)
    return retrieve_top_k(index, query, k)
