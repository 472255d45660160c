from __future__ import annotations

import random

import numpy as np
import pytest

from finemem import kernels


def test_active_backend_reports_a_known_name():
    assert kernels.active_backend() in ("numba", "numpy")


def test_scatter_add_numpy_basics():
    idx = np.array([0, 2, 2], dtype=np.int64)
    val = np.array([1.0, 0.5, 0.25], dtype=np.float64)
    out = kernels.scatter_add_numpy(idx, val, 4)
    assert out.tolist() == [1.0, 0.0, 0.75, 0.0]


def test_scatter_add_empty():
    out = kernels.scatter_add(np.array([], dtype=np.int64), np.array([], dtype=np.float64), 3)
    assert out.tolist() == [0.0, 0.0, 0.0]


def test_bm25_accumulate_numpy_empty_postings():
    out = kernels.bm25_accumulate_numpy(
        np.array([], dtype=np.int64), np.array([]), np.array([]),
        np.ones(2), 1.0, 1.2, 0.75)
    assert out.tolist() == [0.0, 0.0]


@pytest.mark.skipif(kernels.active_backend() != "numba", reason="numba backend not active")
def test_backends_agree_on_scatter_add():
    rng = random.Random(8)
    for _ in range(50):
        size = rng.randint(1, 64)
        count = rng.randint(0, 200)
        idx = np.array([rng.randrange(size) for _ in range(count)], dtype=np.int64)
        val = np.array([rng.random() for _ in range(count)], dtype=np.float64)
        a = kernels.scatter_add_numba(idx, val, size)
        b = kernels.scatter_add_numpy(idx, val, size)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


@pytest.mark.skipif(kernels.active_backend() != "numba", reason="numba backend not active")
def test_backends_agree_on_bm25():
    rng = random.Random(12)
    for _ in range(30):
        n_docs = rng.randint(1, 40)
        count = rng.randint(0, 150)
        post_doc = np.array([rng.randrange(n_docs) for _ in range(count)], dtype=np.int64)
        post_tf = np.array([float(rng.randint(1, 5)) for _ in range(count)])
        post_idf = np.array([rng.random() for _ in range(count)])
        doc_len = np.array([float(rng.randint(1, 20)) for _ in range(n_docs)])
        avgdl = float(doc_len.mean())
        a = kernels.bm25_accumulate_numba(post_doc, post_tf, post_idf, doc_len, avgdl, 1.2, 0.75)
        b = kernels.bm25_accumulate_numpy(post_doc, post_tf, post_idf, doc_len, avgdl, 1.2, 0.75)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_numpy_fallback_env_flag(tmp_path):
    # A fresh interpreter honors FINEMEM_KERNELS=numpy.
    import subprocess
    import sys

    code = "from finemem import kernels; print(kernels.active_backend())"
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"PATH": "/usr/bin:/bin", "FINEMEM_KERNELS": "numpy"},
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_bad_env_flag_rejected():
    import subprocess
    import sys

    code = "import finemem.kernels"
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"PATH": "/usr/bin:/bin", "FINEMEM_KERNELS": "cuda"},
        capture_output=True, text=True,
    )
    assert out.returncode != 0
