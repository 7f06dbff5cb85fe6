"""Pydantic request/response models for the HTTP service."""
from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class RuntimeInfoResponse(BaseModel):
    pool_size: int
    dim: int
    layers: int
    heads: int
    variant: str
    env: str
    dataset: str | None
    step: int


class OptimizeRequest(BaseModel):
    query: str = Field(min_length=1)
    k_max: int | None = Field(default=None, ge=1)
    mode: str = "greedy"
    call_env: bool = False
    sample_seed: int = 0


class SelectedExample(BaseModel):
    index: int
    query: str
    response: str


class OptimizeResponse(BaseModel):
    query: str
    selected: list[SelectedExample]
    prompt: str
    log_prob: float
    response: str | None = None


class GraphRequest(BaseModel):
    query: str | None = None
    full: bool = False


class GraphResponse(BaseModel):
    nodes: list[dict]
    edges: list[list]
    x_shape: list[int]
    x: list[list[float]] | None = None


class CompleteRequest(BaseModel):
    prompt: str
    max_tokens: int = Field(default=256, ge=1)
    temperature: float = Field(default=0.0, ge=0.0)


class CompleteResponse(BaseModel):
    text: str
    latency_ms: float
    meta: dict


class RewardRequest(BaseModel):
    expected: str
    generated: str


class RewardResponse(BaseModel):
    reward: float
    fuzzy: float
    embedding: float
    blend_weight: float


class MetricsPair(BaseModel):
    reference: str
    candidate: str


class MetricsRequest(BaseModel):
    pairs: list[MetricsPair]


class MetricsResponse(BaseModel):
    corpus: dict
    per_item: list[dict]
    empty: bool


class TrainRequest(BaseModel):
    resume: bool = False


class TrainResponse(BaseModel):
    steps: int
    episodes: int
    skipped: int
    mean_reward: float
    final_loss: float
    checkpoint: str
    log: str


class EvalRequest(BaseModel):
    split: str = "test"
    mode: str = "greedy"
    limit: int | None = Field(default=None, ge=1)


class EvalResponse(BaseModel):
    split: str
    count: int
    corpus: dict
    mean_reward: float
    empty: bool
