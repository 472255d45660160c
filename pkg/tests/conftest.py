from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from finemem import kernels
from finemem.memory import Operation
from finemem.qa import QAPair
from finemem.rollout import ChunkStream


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # Pay any JIT compile cost once, outside timed assertions.
    kernels.warmup()


@pytest.fixture
def golden_stream() -> ChunkStream:
    """Three chunks with disjoint vocabularies and two global questions
    whose evidence resolves to exactly one chunk each (steps 0 and 2)."""
    return ChunkStream(
        instance_id="golden",
        chunks=(
            "alpha beta gamma delta",
            "epsilon zeta eta theta",
            "iota kappa lambda mu",
        ),
        chunk_qa=((), (), ()),
        global_qa=(
            QAPair(question="which word follows alpha beta gamma",
                   answer="delta", scope="global"),
            QAPair(question="what comes after iota kappa lambda",
                   answer="mu", scope="global"),
        ),
    )


def random_operation_sets(rng: random.Random, max_steps: int = 6, max_ops: int = 6):
    """A random chunk-ordered sequence of operation lists.

    Targets mix live ids, dangling ids and future ids so rejection paths
    get exercised alongside the happy path.
    """
    steps = rng.randint(1, max_steps)
    op_sets = []
    next_id_guess = 0
    words = ["fox", "owl", "elk", "bee", "cod", "ram", "hen"]
    for _ in range(steps):
        ops = []
        for _ in range(rng.randint(0, max_ops)):
            kind = rng.choice(["insert", "insert", "update", "delete", "skip"])
            if kind == "insert":
                content = " ".join(rng.choices(words, k=rng.randint(1, 4)))
                ops.append(Operation(kind="insert", content=content))
                next_id_guess += 1
            elif kind == "skip":
                ops.append(Operation(kind="skip"))
            else:
                target = rng.randint(0, max(next_id_guess + 2, 3))
                content = rng.choice(words) if kind == "update" else None
                ops.append(Operation(kind=kind, target_id=target, content=content))
        op_sets.append(ops)
    return op_sets
