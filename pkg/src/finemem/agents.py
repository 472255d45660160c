"""Agent endpoints: scripted deterministic agents and remote HTTP clients.

Remote endpoints speak a minimal chat-completion contract:
``POST <address>`` with ``{"prompt": ...}`` returning ``{"text": ...}``.
Scripted agents are deterministic given their name and seed; they exist
so rollouts and dataset construction can run without any model.

Roles: a manager proposes memory operations for a chunk, a reasoner
answers questions over retrieved items, a teacher emits QA candidates
for a chunk, a verifier answers a question from chunk text only, and a
judge grades a prediction.
"""

from __future__ import annotations

import json
import logging
import random
import re
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

logger = logging.getLogger(__name__)

_SENTENCE_SPLIT = re.compile(r"[.!?]+")


class AgentError(RuntimeError):
    """Endpoint failed after exhausting its retry budget."""


@dataclass(frozen=True)
class AgentEndpoint:
    """Where an agent role lives: a scripted template or a remote URI."""

    kind: str  # "scripted" | "remote"
    address: str | None = None
    name: str | None = None
    seed: int = 0
    timeout: float = 30.0
    max_retries: int = 2

    def __post_init__(self):
        if self.kind not in ("scripted", "remote"):
            raise ValueError(f"endpoint kind must be scripted|remote, got {self.kind!r}")
        if self.kind == "remote" and not self.address:
            raise ValueError("remote endpoints require an address")
        if self.kind == "scripted" and not self.name:
            raise ValueError("scripted endpoints require a template name")


def parse_endpoint(spec: str, seed: int = 0, timeout: float = 30.0, max_retries: int = 2) -> AgentEndpoint:
    """Build an endpoint from a CLI spec: ``scripted:NAME`` or a URI."""
    if spec.startswith("scripted:"):
        return AgentEndpoint(kind="scripted", name=spec.split(":", 1)[1], seed=seed,
                             timeout=timeout, max_retries=max_retries)
    return AgentEndpoint(kind="remote", address=spec, seed=seed,
                         timeout=timeout, max_retries=max_retries)


class ManagerAgent(Protocol):
    def propose(self, chunk: str, memory_view: str) -> str: ...


class ReasonerAgent(Protocol):
    def answer(self, question: str, items: Sequence[tuple[int, str]]) -> str: ...


class TeacherAgent(Protocol):
    def generate(self, chunk: str) -> str: ...


class VerifierAgent(Protocol):
    def answer_from_chunk(self, question: str, chunk: str) -> str: ...


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_SPLIT.split(text) if s.strip()]


# ---------------------------------------------------------------------------
# Scripted agents
# ---------------------------------------------------------------------------


class ScriptedManager:
    """Deterministic operation emitters for tests and dry runs.

    Templates:
      insert_verbatim  - one INSERT holding the whole chunk
      insert_sentences - one INSERT per sentence
      skip             - always answers ``done``
      lossy            - keeps each sentence with probability 0.7 (seeded)
      garbled          - emits unparseable text (formatting-failure probe)
    """

    TEMPLATES = ("insert_verbatim", "insert_sentences", "skip", "lossy", "garbled")

    def __init__(self, name: str, seed: int = 0):
        if name not in self.TEMPLATES:
            raise ValueError(f"unknown scripted manager {name!r}")
        self.name = name
        self.seed = seed
        self._calls = 0

    def propose(self, chunk: str, memory_view: str) -> str:
        self._calls += 1
        if self.name == "skip":
            return "done"
        if self.name == "garbled":
            return "sure, I'll remember that!"
        if self.name == "insert_verbatim":
            return json.dumps([{"op": "insert", "content": chunk}], ensure_ascii=False)
        sentences = split_sentences(chunk)
        if self.name == "lossy":
            rng = random.Random(self.seed * 1_000_003 + self._calls)
            sentences = [s for s in sentences if rng.random() < 0.7]
        if not sentences:
            return "done"
        return json.dumps([{"op": "insert", "content": s} for s in sentences], ensure_ascii=False)


class ScriptedReasoner:
    """Templates: ``concat`` returns every retrieved content joined;
    ``first`` returns only the top item; ``silent`` returns nothing."""

    TEMPLATES = ("concat", "first", "silent")

    def __init__(self, name: str, seed: int = 0):
        if name not in self.TEMPLATES:
            raise ValueError(f"unknown scripted reasoner {name!r}")
        self.name = name

    def answer(self, question: str, items: Sequence[tuple[int, str]]) -> str:
        if self.name == "silent" or not items:
            return ""
        if self.name == "first":
            return items[0][1]
        return " ; ".join(content for _, content in items)


class ScriptedTeacher:
    """``cloze`` template: one candidate per sentence, the answer being
    the sentence's final token and the question its remaining prefix."""

    TEMPLATES = ("cloze",)

    def __init__(self, name: str = "cloze", seed: int = 0):
        if name not in self.TEMPLATES:
            raise ValueError(f"unknown scripted teacher {name!r}")
        self.name = name

    def generate(self, chunk: str) -> str:
        pairs = []
        for sentence in split_sentences(chunk):
            tokens = sentence.split()
            if len(tokens) < 2:
                continue
            answer = tokens[-1].strip(".,;:!?")
            if not answer:
                continue
            question = f"In the passage, {' '.join(tokens[:-1])} what?"
            pairs.append({"question": question, "answer": answer})
        return json.dumps(pairs, ensure_ascii=False)


class ScriptedVerifier:
    """``span`` template: answers with the chunk sentence sharing the
    most tokens with the question (ties to the earliest sentence)."""

    TEMPLATES = ("span",)

    def __init__(self, name: str = "span", seed: int = 0):
        if name not in self.TEMPLATES:
            raise ValueError(f"unknown scripted verifier {name!r}")
        self.name = name

    def answer_from_chunk(self, question: str, chunk: str) -> str:
        q_tokens = set(question.lower().split())
        best, best_overlap = "", -1
        for sentence in split_sentences(chunk):
            overlap = len(q_tokens & set(sentence.lower().split()))
            if overlap > best_overlap:
                best, best_overlap = sentence, overlap
        return best


class ScriptedJudge:
    """``containment`` template: grades 1.0 when the gold answer appears
    in the prediction, else 0.0."""

    TEMPLATES = ("containment",)

    def __init__(self, name: str = "containment", seed: int = 0):
        if name not in self.TEMPLATES:
            raise ValueError(f"unknown scripted judge {name!r}")
        self.name = name

    def judge(self, question: str, gold: str, prediction: str) -> float:
        from .scoring import subem_score

        return subem_score(prediction, gold)


# ---------------------------------------------------------------------------
# Remote agents
# ---------------------------------------------------------------------------


class _RemoteBase:
    def __init__(self, endpoint: AgentEndpoint):
        if endpoint.kind != "remote":
            raise ValueError("remote agent requires a remote endpoint")
        self.endpoint = endpoint
        self._client = httpx.Client(timeout=endpoint.timeout)

    def _complete(self, prompt: str) -> str:
        last_error: Exception | None = None
        for attempt in range(1 + self.endpoint.max_retries):
            if attempt:
                time.sleep(min(0.25 * 2 ** (attempt - 1), 2.0))
            try:
                resp = self._client.post(self.endpoint.address, json={"prompt": prompt})
            except httpx.HTTPError as e:
                last_error = e
                continue
            if resp.status_code >= 500:
                last_error = AgentError(f"{self.endpoint.address} returned {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise AgentError(f"{self.endpoint.address} returned {resp.status_code}: {resp.text}")
            try:
                return resp.json()["text"]
            except (ValueError, KeyError) as e:
                raise AgentError(f"malformed completion payload: {e}") from e
        raise AgentError(f"endpoint {self.endpoint.address} failed after "
                         f"{1 + self.endpoint.max_retries} attempts: {last_error}")


class RemoteManager(_RemoteBase):
    def propose(self, chunk: str, memory_view: str) -> str:
        prompt = (
            "You maintain a memory of items listed as [id] content.\n"
            "Current memory:\n" + (memory_view or "(empty)") + "\n\n"
            "New chunk:\n" + chunk + "\n\n"
            'Reply with a JSON array of operations {"op": "insert|update|delete", '
            '"id": ..., "content": ...} or the single token done.'
        )
        return self._complete(prompt)


class RemoteReasoner(_RemoteBase):
    def answer(self, question: str, items: Sequence[tuple[int, str]]) -> str:
        listing = "\n".join(f"[{i}] {content}" for i, content in items) or "(nothing retrieved)"
        prompt = f"Evidence:\n{listing}\n\nQuestion: {question}\nAnswer concisely."
        return self._complete(prompt)


class RemoteTeacher(_RemoteBase):
    def generate(self, chunk: str) -> str:
        prompt = (
            "Extract concise factoid question/answer pairs from the passage below. "
            'Reply with a JSON array of {"question": ..., "answer": ...}.\n\n' + chunk
        )
        return self._complete(prompt)


class RemoteVerifier(_RemoteBase):
    def answer_from_chunk(self, question: str, chunk: str) -> str:
        prompt = (
            "Answer the question using only the passage below.\n\n"
            f"Passage:\n{chunk}\n\nQuestion: {question}\nAnswer:"
        )
        return self._complete(prompt)


class RemoteJudge(_RemoteBase):
    def judge(self, question: str, gold: str, prediction: str) -> float:
        prompt = (
            "Grade the prediction against the reference answer on a 0 to 1 scale. "
            "Reply with a single number.\n\n"
            f"Question: {question}\nReference: {gold}\nPrediction: {prediction}"
        )
        text = self._complete(prompt).strip()
        match = re.search(r"[01](?:\.\d+)?", text)
        if not match:
            raise AgentError(f"judge reply is not a score: {text!r}")
        return float(match.group())


_SCRIPTED = {
    "manager": ScriptedManager,
    "reasoner": ScriptedReasoner,
    "teacher": ScriptedTeacher,
    "verifier": ScriptedVerifier,
    "judge": ScriptedJudge,
}

_REMOTE = {
    "manager": RemoteManager,
    "reasoner": RemoteReasoner,
    "teacher": RemoteTeacher,
    "verifier": RemoteVerifier,
    "judge": RemoteJudge,
}


def make_agent(role: str, endpoint: AgentEndpoint):
    """Instantiate the agent for ``role`` behind the given endpoint."""
    if role not in _SCRIPTED:
        raise ValueError(f"unknown agent role {role!r}")
    if endpoint.kind == "scripted":
        return _SCRIPTED[role](endpoint.name, seed=endpoint.seed)
    return _REMOTE[role](endpoint)
