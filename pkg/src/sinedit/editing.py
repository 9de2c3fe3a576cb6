"""High-level edit workflows: request plumbing, full-image edits, tiling.

This is the layer the CLI and service call into. It loads a checkpoint,
builds the guidance from an edit request (prompt embedding with optional
ensembling, mask pyramid, content targets from rectangle specs), runs the
guided sampler, and for scenes larger than the trained image crops a tile,
edits it and feathers it back in.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Callable

import numpy as np

from .embedders import Embedder, get_embedder
from .errors import InvalidInputError, InvalidRequestError
from .guidance import (
    GuidanceRuntime,
    GuidanceSpec,
    ROI_CONTENT,
    SourceAnchorHooks,
    TEXT_FULL,
    TEXT_ROI,
)
from .imaging import require_image, require_mask
from .prompts import ChatVariantClient, build_prompt_bundle
from .sampling import Sampler, sampler_from_trainer
from .training import Trainer


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, top-left corner plus size, in pixels."""

    x: int
    y: int
    w: int
    h: int

    def validate_within(self, height: int, width: int, name: str = "rect") -> "Rect":
        if self.w < 1 or self.h < 1:
            raise InvalidRequestError(name, f"empty rectangle {self}")
        if self.x < 0 or self.y < 0 or self.x + self.w > width or self.y + self.h > height:
            raise InvalidRequestError(
                name, f"{self} outside image bounds {height}x{width}"
            )
        return self

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)

    @classmethod
    def parse(cls, text: str, name: str = "rect") -> "Rect":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise InvalidRequestError(name, f"expected 'x,y,w,h', got {text!r}")
        try:
            x, y, w, h = (int(p) for p in parts)
        except ValueError as exc:
            raise InvalidRequestError(name, f"non-integer rect {text!r}") from exc
        return cls(x, y, w, h)


@dataclass
class EditRequest:
    """Everything needed to run one edit against a checkpoint."""

    checkpoint: str
    mode: str
    prompt: str | None = None
    use_pe: bool = False
    variant_count: int = 5
    mask: np.ndarray | None = None
    source_rect: Rect | None = None
    dest_rects: list[Rect] = dataclass_field(default_factory=list)
    eta: float = 0.3
    momentum: float = 0.05
    seed: int = 0
    scales: list[int] | None = None
    sigma_mode: str = "auto"
    literal_update: bool = False
    embedder_name: str = "mock"

    def validate(self) -> "EditRequest":
        if self.mode not in (TEXT_FULL, TEXT_ROI, ROI_CONTENT):
            raise InvalidRequestError("mode", f"unknown mode {self.mode!r}")
        if self.mode in (TEXT_FULL, TEXT_ROI) and not (self.prompt and self.prompt.strip()):
            raise InvalidRequestError("prompt", f"{self.mode} requires a prompt")
        if self.mode == TEXT_ROI and self.mask is None:
            raise InvalidRequestError("mask", "text-roi requires a mask")
        if self.mode == ROI_CONTENT:
            if self.source_rect is None:
                raise InvalidRequestError("source_rect", "roi-content requires a source rect")
            if not self.dest_rects:
                raise InvalidRequestError(
                    "dest_rects", "roi-content requires at least one destination rect"
                )
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidRequestError("eta", f"must be in [0,1], got {self.eta}")
        if not 0.0 <= self.momentum <= 1.0:
            raise InvalidRequestError("momentum", f"must be in [0,1], got {self.momentum}")
        if self.variant_count < 1:
            raise InvalidRequestError("variant_count", "must be >= 1")
        return self


@dataclass
class ModelBundle:
    """A loaded checkpoint ready for sampling."""

    trainer: Trainer
    sampler: Sampler

    @property
    def source(self) -> np.ndarray:
        return self.trainer.source

    @classmethod
    def load(cls, path: str) -> "ModelBundle":
        trainer = Trainer.from_checkpoint(path)
        return cls(trainer=trainer, sampler=sampler_from_trainer(trainer))


def content_target(
    source: np.ndarray, source_rect: Rect, dest_rects: list[Rect]
) -> tuple[np.ndarray, np.ndarray]:
    """Copy a region of the source into destination slots.

    Returns the composed target image and the binary mask covering the
    destinations. Destination rects must match the source rect's size.
    """
    h, w = source.shape[:2]
    source_rect.validate_within(h, w, "source_rect")
    patch = source[source_rect.slices()]
    target = source.copy()
    mask = np.zeros((h, w), dtype=np.float32)
    for i, rect in enumerate(dest_rects):
        rect.validate_within(h, w, f"dest_rects[{i}]")
        if (rect.w, rect.h) != (source_rect.w, source_rect.h):
            raise InvalidRequestError(
                f"dest_rects[{i}]",
                f"size {rect.w}x{rect.h} != source rect size {source_rect.w}x{source_rect.h}",
            )
        rows, cols = rect.slices()
        target[rows, cols] = patch
        mask[rows, cols] = 1.0
    return target, mask


def text_embedding_for(
    request: EditRequest,
    embedder: Embedder,
    llm_client: ChatVariantClient | None = None,
) -> np.ndarray:
    if request.use_pe:
        bundle = build_prompt_bundle(
            request.prompt, embedder, k=request.variant_count, llm_client=llm_client
        )
        return bundle.ensembled
    return embedder.embed_text(request.prompt)


def build_guidance(
    request: EditRequest,
    source: np.ndarray,
    embedder: Embedder,
    llm_client: ChatVariantClient | None = None,
) -> GuidanceSpec:
    request.validate()
    h, w = source.shape[:2]
    if request.mode == ROI_CONTENT:
        target, mask = content_target(source, request.source_rect, request.dest_rects)
        return GuidanceSpec(
            mode=ROI_CONTENT,
            target=target,
            mask=mask,
            eta=request.eta,
            momentum=request.momentum,
            scales=request.scales,
            sigma_mode=request.sigma_mode,
        )
    mask = None
    if request.mode == TEXT_ROI:
        mask = require_mask(request.mask)
        if mask.shape != (h, w):
            raise InvalidRequestError(
                "mask", f"dims {mask.shape} != source dims {(h, w)}"
            )
    return GuidanceSpec(
        mode=request.mode,
        text_embedding=text_embedding_for(request, embedder, llm_client),
        mask=mask,
        eta=request.eta,
        momentum=request.momentum,
        scales=request.scales,
        sigma_mode=request.sigma_mode,
        literal_update=request.literal_update,
    )


def run_edit(
    request: EditRequest,
    bundle: ModelBundle | None = None,
    embedder: Embedder | None = None,
    llm_client: ChatVariantClient | None = None,
    on_step: Callable | None = None,
) -> np.ndarray:
    """Full guided reverse pass; returns the edited image in [-1, 1]."""
    request.validate()
    if bundle is None:
        bundle = ModelBundle.load(request.checkpoint)
    if embedder is None:
        embedder = get_embedder(request.embedder_name)
    spec = build_guidance(request, bundle.source, embedder, llm_client)
    runtime = GuidanceRuntime(spec, bundle.sampler.pyramid, embedder)
    return bundle.sampler.run(seed=request.seed, hooks=runtime, on_step=on_step)


def reconstruct_source(
    bundle: ModelBundle,
    seed: int = 0,
    scales: list[int] | None = None,
    on_step: Callable | None = None,
) -> np.ndarray:
    """The unedited baseline: sampling re-anchored to the source each step."""
    hooks = SourceAnchorHooks(bundle.sampler.pyramid, scales)
    return bundle.sampler.run(seed=seed, hooks=hooks, on_step=on_step)


def _feather_alpha(
    tile_h: int, tile_w: int, rect: Rect, image_h: int, image_w: int, feather: int
) -> np.ndarray:
    """Per-pixel blend weight for the edited tile.

    Linear ramp over `feather` pixels on tile sides that border more image;
    sides flush with the image boundary stay at full weight since there is
    no seam to hide there. Ramp value at inward distance d is (d+1)/(feather+1).
    """
    alpha = np.ones((tile_h, tile_w), dtype=np.float32)
    if feather <= 0:
        return alpha

    def ramp(n: int) -> np.ndarray:
        out = np.ones(n, dtype=np.float32)
        k = min(feather, n)
        out[:k] = (np.arange(k, dtype=np.float32) + 1.0) / (feather + 1.0)
        return out

    rows = np.ones(tile_h, dtype=np.float32)
    cols = np.ones(tile_w, dtype=np.float32)
    if rect.y > 0:
        rows = np.minimum(rows, ramp(tile_h))
    if rect.y + rect.h < image_h:
        rows = np.minimum(rows, ramp(tile_h)[::-1])
    if rect.x > 0:
        cols = np.minimum(cols, ramp(tile_w))
    if rect.x + rect.w < image_w:
        cols = np.minimum(cols, ramp(tile_w)[::-1])
    alpha *= np.minimum(rows[:, None], cols[None, :])
    return alpha


def tile_edit(
    image: np.ndarray,
    rect: Rect,
    edit_fn: Callable[[np.ndarray], np.ndarray],
    feather: int = 8,
) -> np.ndarray:
    """Crop a tile, edit it, and blend it back into the scene.

    With feather 0 the edited tile is pasted verbatim, so an identity
    edit_fn round-trips the image bit for bit. Pixels outside the tile are
    never touched.
    """
    image = require_image(image)
    h, w = image.shape[:2]
    rect.validate_within(h, w, "tile_rect")
    if feather < 0:
        raise InvalidInputError(f"feather must be >= 0, got {feather}")

    rows, cols = rect.slices()
    tile = np.ascontiguousarray(image[rows, cols])
    edited = np.asarray(edit_fn(tile), dtype=np.float32)
    if edited.shape != tile.shape:
        raise InvalidInputError(
            f"edit returned shape {edited.shape}, expected {tile.shape}"
        )

    out = image.copy()
    if feather == 0:
        out[rows, cols] = edited
        return out
    alpha = _feather_alpha(rect.h, rect.w, rect, h, w, feather)[:, :, None]
    out[rows, cols] = alpha * edited + (1.0 - alpha) * tile
    return out


def edit_fn_for_request(
    request: EditRequest,
    bundle: ModelBundle,
    embedder: Embedder | None = None,
) -> Callable[[np.ndarray], np.ndarray]:
    """Adapter for tile_edit: checks the tile matches the checkpoint's dims."""

    def fn(tile: np.ndarray) -> np.ndarray:
        expected = bundle.source.shape
        if tile.shape != expected:
            raise InvalidRequestError(
                "tile_rect",
                f"tile shape {tile.shape} != checkpoint source shape {expected}",
            )
        return run_edit(request, bundle=bundle, embedder=embedder)

    return fn
