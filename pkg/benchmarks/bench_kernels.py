#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two hot loops on synthetic workloads sized like real use:
BM25 score accumulation over a large corpus and batched evidence
scatter-adds. Run:

    python benchmarks/bench_kernels.py [--docs 50000] [--queries 200] [--repeat 5]
"""

from __future__ import annotations

import argparse
import random
import time

import numpy as np

from finemem import kernels
from finemem.retrieval import build_index, score_all


def build_corpus(n_docs: int, vocab_size: int, rng: random.Random):
    vocab = [f"term{i}" for i in range(vocab_size)]
    docs = [(i, " ".join(rng.choices(vocab, k=rng.randint(5, 40)))) for i in range(n_docs)]
    queries = [" ".join(rng.choices(vocab, k=rng.randint(1, 4))) for _ in range(200)]
    return docs, queries


def gather_postings(index, queries):
    """Pre-extract the kernel inputs so only accumulation is timed."""
    from finemem.retrieval import tokenize

    batches = []
    for query in queries:
        doc_chunks, tf_chunks, idf_chunks = [], [], []
        for term in tokenize(query):
            posting = index._postings.get(term)
            if posting is None:
                continue
            doc_ids, tfs = posting
            doc_chunks.append(doc_ids)
            tf_chunks.append(tfs)
            idf_chunks.append(np.full(len(doc_ids), index._idf[term]))
        if doc_chunks:
            batches.append((np.concatenate(doc_chunks), np.concatenate(tf_chunks),
                            np.concatenate(idf_chunks)))
    return batches


def time_bm25(fn, batches, index, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for post_doc, post_tf, post_idf in batches:
            fn(post_doc, post_tf, post_idf, index.doc_len, index.avg_doc_len, 1.2, 0.75)
        best = min(best, time.perf_counter() - start)
    return best


def time_scatter(fn, batches, size, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for idx, val in batches:
            fn(idx, val, size)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=50_000)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    print(f"building corpus: {args.docs} docs, {args.queries} queries")
    docs, queries = build_corpus(args.docs, vocab_size=max(100, args.docs // 100), rng=rng)
    queries = queries[: args.queries]
    index = build_index(docs)
    batches = gather_postings(index, queries)
    total_postings = sum(len(b[0]) for b in batches)
    print(f"query batches: {len(batches)}, total postings touched: {total_postings}")

    # scatter-add workload: 10k evidence batches over 32-step rollouts
    scatter_batches = []
    for _ in range(10_000):
        count = rng.randint(1, 300)
        idx = np.array([rng.randrange(32) for _ in range(count)], dtype=np.int64)
        val = np.random.default_rng(rng.randrange(2**31)).random(count)
        scatter_batches.append((idx, val))

    rows = []
    rows.append(("bm25 numpy", time_bm25(kernels.bm25_accumulate_numpy, batches, index, args.repeat)))
    rows.append(("scatter numpy", time_scatter(kernels.scatter_add_numpy, scatter_batches, 32, args.repeat)))

    if kernels.active_backend() == "numba":
        kernels.warmup()
        rows.insert(1, ("bm25 numba", time_bm25(kernels.bm25_accumulate_numba, batches, index, args.repeat)))
        rows.append(("scatter numba", time_scatter(kernels.scatter_add_numba, scatter_batches, 32, args.repeat)))
    else:
        print("numba backend unavailable (FINEMEM_KERNELS=numpy?): timing fallback only")

    print(f"\n{'kernel':<16}{'best of ' + str(args.repeat):>14}")
    for name, seconds in rows:
        print(f"{name:<16}{seconds:>13.4f}s")

    if kernels.active_backend() == "numba":
        bm25 = {n: s for n, s in rows if n.startswith("bm25")}
        scat = {n: s for n, s in rows if n.startswith("scatter")}
        print(f"\nspeedup bm25:    {bm25['bm25 numpy'] / bm25['bm25 numba']:.2f}x")
        print(f"speedup scatter: {scat['scatter numpy'] / scat['scatter numba']:.2f}x")

    # sanity: both paths agree on one batch
    if kernels.active_backend() == "numba" and batches:
        a = kernels.bm25_accumulate_numba(*batches[0], index.doc_len, index.avg_doc_len, 1.2, 0.75)
        b = kernels.bm25_accumulate_numpy(*batches[0], index.doc_len, index.avg_doc_len, 1.2, 0.75)
        assert np.allclose(a, b, atol=1e-12), "backend mismatch"
        print("\nbackends agree on spot check")


if __name__ == "__main__":
    main()
