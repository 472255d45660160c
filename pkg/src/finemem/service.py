"""HTTP reward service for external training loops.

Endpoints (UTF-8 JSON over HTTP/1.1):
  POST /v1/eara           evidence records -> per-step attribution
  POST /v1/advantages     reward groups -> standardized advantages
  POST /v1/rollout/score  component vectors -> per-step totals
  GET  /health            liveness and version

Handlers are pure over request bodies; malformed bodies get 400,
dimensionally inconsistent ones 422, and requests beyond the concurrency
cap 503. Floats serialize via round-trip-exact decimal repr so trainer
processes reconstruct bit-identical doubles.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .rewards import (
    ConsistencyError,
    EvidenceRecord,
    RewardWeights,
    compute_eara,
    compute_nec,
    conservation_gap,
    global_reward,
    grpo_advantages,
    total_step_rewards,
)

CONSERVATION_TOLERANCE = 1e-9


@dataclass
class ServiceConfig:
    bind_address: str = "127.0.0.1"
    port: int = 8431
    max_concurrent_requests: int = 64
    default_weights: RewardWeights = field(default_factory=RewardWeights)
    request_timeout: float = 30.0

    def __post_init__(self):
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be >= 1")


class EvidenceIn(BaseModel):
    question_index: int = 0
    score: float
    retrieved_item_ids: list[int]
    origin_steps: list[int]


class EaraRequest(BaseModel):
    nec_inputs: list[EvidenceIn]
    T: int
    r_global: Optional[float] = None
    beta: float


class EaraResponse(BaseModel):
    rewards: list[float]
    nec: list[float]
    conserved: bool


class AdvantagesRequest(BaseModel):
    groups: list[list[float]]
    epsilon: float


class AdvantagesResponse(BaseModel):
    advantages: list[list[float]]


class WeightsIn(BaseModel):
    w1: float = 0.5
    w2: float = 0.05
    beta: float = 0.5
    epsilon: float = 1e-8
    fmt_enabled: bool = True
    chunk_enabled: bool = True
    comp_enabled: bool = True


class ScoreRequest(BaseModel):
    eara: list[float]
    fmt: list[float]
    chunk: list[float]
    r_comp: float
    weights: Optional[WeightsIn] = None


class StepBreakdownOut(BaseModel):
    step: int
    r_eara: float
    r_fmt: float
    r_chunk: float
    r_comp: float
    total: float


class ScoreResponse(BaseModel):
    per_step: list[StepBreakdownOut]
    weights: WeightsIn


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="finemem reward service", version=__version__)
    app.state.config = config
    app.state.shutting_down = False
    app.state.active_requests = 0
    app.state.lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def schema_violation(request: Request, exc: RequestValidationError):
        # Schema violations are the caller's bug, not a semantics problem.
        return JSONResponse(status_code=400,
                            content={"detail": jsonable_encoder(exc.errors())})

    @app.middleware("http")
    async def capacity_gate(request: Request, call_next):
        with app.state.lock:
            if app.state.active_requests >= config.max_concurrent_requests:
                return JSONResponse(status_code=503, content={"detail": "over capacity"})
            app.state.active_requests += 1
        try:
            return await call_next(request)
        finally:
            with app.state.lock:
                app.state.active_requests -= 1

    @app.get("/health")
    async def health():
        if app.state.shutting_down:
            return JSONResponse(status_code=503, content={"status": "shutting down"})
        return {"status": "ok", "version": __version__}

    @app.post("/v1/eara", response_model=EaraResponse)
    async def eara(body: EaraRequest):
        if body.T < 1:
            raise HTTPException(422, "T must be >= 1")
        if not body.nec_inputs:
            raise HTTPException(422, "nec_inputs must be non-empty")
        if not 0.0 <= body.beta <= 1.0:
            raise HTTPException(422, "beta must be in [0,1]")
        records = []
        for e in body.nec_inputs:
            if len(e.retrieved_item_ids) != len(e.origin_steps):
                raise HTTPException(422, "retrieved_item_ids and origin_steps must align")
            try:
                records.append(EvidenceRecord(
                    question_index=e.question_index,
                    score=e.score,
                    retrieved_item_ids=tuple(e.retrieved_item_ids),
                    origin_steps=tuple(e.origin_steps),
                ))
            except ValueError as err:
                raise HTTPException(422, str(err))
        try:
            nec = compute_nec(records, body.T)
        except ConsistencyError as err:
            raise HTTPException(422, str(err))
        r_global = body.r_global
        if r_global is None:
            r_global = global_reward([r.score for r in records])
        rewards = compute_eara(nec, r_global, body.beta, body.T)
        return EaraResponse(
            rewards=[float(x) for x in rewards],
            nec=[float(x) for x in nec],
            conserved=conservation_gap(rewards, r_global) <= CONSERVATION_TOLERANCE,
        )

    @app.post("/v1/advantages", response_model=AdvantagesResponse)
    async def advantages(body: AdvantagesRequest):
        if not body.groups:
            raise HTTPException(422, "groups must be non-empty")
        if body.epsilon <= 0.0:
            raise HTTPException(422, "epsilon must be positive")
        out = []
        for i, group in enumerate(body.groups):
            if len(group) < 2:
                raise HTTPException(422, f"group {i} needs at least 2 rewards")
            out.append(grpo_advantages(group, body.epsilon))
        return AdvantagesResponse(advantages=out)

    @app.post("/v1/rollout/score", response_model=ScoreResponse)
    async def rollout_score(body: ScoreRequest):
        if not (len(body.eara) == len(body.fmt) == len(body.chunk)):
            raise HTTPException(422, "eara, fmt and chunk must share one length")
        if not body.eara:
            raise HTTPException(422, "component vectors must be non-empty")
        w_in = body.weights or WeightsIn(**_weights_dict(config.default_weights))
        try:
            weights = RewardWeights(**w_in.model_dump())
        except ValueError as err:
            raise HTTPException(422, str(err))
        breakdowns = total_step_rewards(body.eara, body.fmt, body.chunk, body.r_comp, weights)
        return ScoreResponse(
            per_step=[StepBreakdownOut(step=b.step, r_eara=b.r_eara, r_fmt=b.r_fmt,
                                       r_chunk=b.r_chunk, r_comp=b.r_comp, total=b.total)
                      for b in breakdowns],
            weights=w_in,
        )

    return app


def _weights_dict(w: RewardWeights) -> dict:
    return {
        "w1": w.w1, "w2": w.w2, "beta": w.beta, "epsilon": w.epsilon,
        "fmt_enabled": w.fmt_enabled, "chunk_enabled": w.chunk_enabled,
        "comp_enabled": w.comp_enabled,
    }


def serve(config: ServiceConfig | None = None) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    config = config or ServiceConfig()
    uvicorn.run(create_app(config), host=config.bind_address, port=config.port, log_level="warning")
