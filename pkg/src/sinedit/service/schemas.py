"""Request and response bodies for the job service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, field_validator


class RectModel(BaseModel):
    x: int = Field(ge=0)
    y: int = Field(ge=0)
    w: int = Field(ge=1)
    h: int = Field(ge=1)


class TrainJobRequest(BaseModel):
    name: str = Field(min_length=1, max_length=80, pattern=r"^[A-Za-z0-9._-]+$")
    epochs: int = Field(default=2000, ge=1)
    batch_size: int = Field(default=16, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    loss: Literal["l1", "l2"] = "l1"
    seed: int = 0
    channels: int = Field(default=64, ge=1)
    blocks: int = Field(default=4, ge=1)
    embed_dim: int = Field(default=64, ge=2)
    t0: int = Field(default=100, ge=1)
    ts: int | None = Field(default=None, ge=1)
    beta_min: float = Field(default=1e-4, gt=0, lt=1)
    beta_max: float = Field(default=0.02, gt=0, lt=1)
    factor: float = Field(default=4.0 / 3.0, gt=1)
    min_dim: int = Field(default=24, ge=4)

    @field_validator("embed_dim")
    @classmethod
    def _even_embed(cls, v: int) -> int:
        if v % 2:
            raise ValueError("embed_dim must be even")
        return v


class EditJobRequest(BaseModel):
    checkpoint: str = Field(min_length=1)
    mode: Literal["text-full", "text-roi", "roi-content"]
    prompt: str | None = None
    use_pe: bool = False
    variant_count: int = Field(default=5, ge=1)
    source_rect: RectModel | None = None
    dest_rects: list[RectModel] = Field(default_factory=list)
    eta: float = Field(default=0.3, ge=0.0, le=1.0)
    momentum: float = Field(default=0.05, ge=0.0, le=1.0)
    seed: int = 0
    scales: list[int] | None = None
    sigma_mode: Literal["auto", "deterministic", "ancestral"] = "auto"
    embedder: str = "mock"


class ScoreJobRequest(BaseModel):
    prompt: str = Field(min_length=1)
    embedder: str = "mock"
    omega: float = Field(default=1.0, gt=0.0)


class VariantsRequest(BaseModel):
    prompt: str = Field(min_length=1)
    k: int = Field(default=5, ge=1)


class VariantsResponse(BaseModel):
    prompt: str
    variants: list[str]


class JobInfo(BaseModel):
    id: str
    kind: Literal["train", "edit", "score"]
    state: Literal["QUEUED", "RUNNING", "DONE", "FAILED"]
    progress: float = Field(ge=0.0, le=1.0)
    error: str | None = None
    result_available: bool = False
    created_at: float
    updated_at: float


class CheckpointInfo(BaseModel):
    name: str
    step: int | None = None
    height: int | None = None
    width: int | None = None


class CheckpointListResponse(BaseModel):
    checkpoints: list[CheckpointInfo]


class ErrorItem(BaseModel):
    field: str
    message: str


class ErrorResponse(BaseModel):
    errors: list[ErrorItem]
