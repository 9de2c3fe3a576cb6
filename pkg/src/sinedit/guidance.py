"""Text and region guidance applied to the sampler's clean estimates.

Text guidance nudges the clean estimate down the gradient of a cosine loss
between its embedding and the prompt embedding, confined to a region mask;
region-content guidance blends a target image into the mask instead. In
both masked modes every reverse step re-anchors the pixels outside the mask
to the source image's own denoising path, so unedited content tracks the
source by construction.

Masks are computed once at the finest scale, resized and re-binarized per
scale, then held fixed for the whole run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .embedders import Embedder
from .errors import GuidanceError, InvalidConfigError, InvalidInputError
from .pyramid import ImagePyramid, resample
from .sampling import SamplerState, StepInfo, anchor_noise
from .schedule import DiffusionSchedule

TEXT_FULL = "text-full"
TEXT_ROI = "text-roi"
ROI_CONTENT = "roi-content"
MODES = (TEXT_FULL, TEXT_ROI, ROI_CONTENT)

DEFAULT_ETA = 0.3
DEFAULT_MOMENTUM = 0.05


@dataclass
class RoiMask:
    """Binary masks for every scale, derived once from the finest-scale base."""

    base: np.ndarray
    per_scale: list[np.ndarray]
    provenance: str = "user"

    def at(self, scale: int) -> np.ndarray:
        return self.per_scale[scale]


def mask_pyramid(
    base_mask: np.ndarray,
    dims: list[tuple[int, int]],
    provenance: str = "user",
) -> RoiMask:
    """Resize the finest-scale mask to every scale and re-binarize at 0.5."""
    base = np.asarray(base_mask, dtype=np.float32)
    if base.ndim != 2:
        raise InvalidInputError(f"mask must be 2-d, got shape {base.shape}")
    if not np.isin(base, (0.0, 1.0)).all():
        raise InvalidInputError("mask values must be exactly 0 or 1")
    if base.shape != dims[-1]:
        raise InvalidInputError(
            f"mask dims {base.shape} != finest scale dims {dims[-1]}"
        )
    per_scale = []
    for target in dims:
        resized = resample(base, target)
        per_scale.append((resized >= 0.5).astype(np.float32))
    return RoiMask(base=base, per_scale=per_scale, provenance=provenance)


def clip_loss(e_image: np.ndarray, e_text: np.ndarray) -> float:
    """Negative cosine similarity between the two embeddings."""
    ni = float(np.linalg.norm(e_image))
    nt = float(np.linalg.norm(e_text))
    if ni < 1e-12 or nt < 1e-12:
        raise InvalidInputError("zero-norm embedding in cosine loss")
    return float(-(e_image @ e_text) / (ni * nt))


def clip_loss_and_grad(
    clean: np.ndarray, e_text: np.ndarray, embedder: Embedder
) -> tuple[float, np.ndarray]:
    """Loss value and its gradient with respect to the image pixels."""
    x = torch.from_numpy(np.ascontiguousarray(clean, dtype=np.float32))
    x.requires_grad_(True)
    e_image = embedder.embed_image_tensor(x)
    target = torch.from_numpy(np.asarray(e_text, dtype=np.float32))
    target = target / torch.linalg.vector_norm(target)
    loss = -(e_image * target).sum()
    loss.backward()
    return float(loss.detach()), x.grad.numpy()


def _as_mask3(mask: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if mask.shape != shape[:2]:
        raise InvalidInputError(f"mask dims {mask.shape} != image dims {shape[:2]}")
    return mask[:, :, None]


def text_guided_update(
    clean: np.ndarray,
    grad: np.ndarray,
    mask: np.ndarray,
    eta: float,
    momentum: float,
    clean_prev: np.ndarray | None,
    literal: bool = False,
) -> np.ndarray:
    """Masked gradient step inside the region, momentum mix outside.

    The step size is scaled by the ratio of masked image norm to masked
    gradient norm, so eta is resolution-independent; a zero masked gradient
    makes the inside term a no-op. Outside the mask the estimate is pulled
    toward the previous step's estimate (identity on the first step of a
    scale, where no previous estimate exists).

    literal=True applies the replacement form, where the region content is
    the scaled gradient itself rather than a step away from the current
    estimate; kept for comparison, not a descent update.
    """
    if not 0.0 <= eta <= 1.0 or not 0.0 <= momentum <= 1.0:
        raise InvalidInputError(f"eta and momentum must be in [0,1], got {eta}, {momentum}")
    if grad.shape != clean.shape:
        raise InvalidInputError(f"grad shape {grad.shape} != image shape {clean.shape}")
    if clean_prev is not None and clean_prev.shape != clean.shape:
        raise InvalidInputError("previous estimate shape mismatch")
    m3 = _as_mask3(np.asarray(mask, dtype=np.float32), clean.shape)

    masked_grad = grad * m3
    grad_norm = float(np.linalg.norm(masked_grad))
    if grad_norm > 0.0:
        delta = float(np.linalg.norm(clean * m3)) / grad_norm
    else:
        delta = 0.0

    if literal:
        inside = eta * delta * masked_grad
    else:
        inside = clean - eta * delta * masked_grad
    if clean_prev is None:
        outside = clean
    else:
        outside = momentum * clean + (1.0 - momentum) * clean_prev
    return (m3 * inside + (1.0 - m3) * outside).astype(np.float32)


def roi_content_update(
    clean: np.ndarray, target: np.ndarray, mask: np.ndarray, eta: float
) -> np.ndarray:
    """Blend the target into the region; pixels outside are untouched."""
    if not 0.0 <= eta <= 1.0:
        raise InvalidInputError(f"eta must be in [0,1], got {eta}")
    if target.shape != clean.shape:
        raise InvalidInputError(f"target shape {target.shape} != image shape {clean.shape}")
    m3 = _as_mask3(np.asarray(mask, dtype=np.float32), clean.shape)
    inside = (1.0 - eta) * clean + eta * target
    return (m3 * inside + (1.0 - m3) * clean).astype(np.float32)


@dataclass
class GuidanceSpec:
    """What to do to the clean estimate, where, and how strongly."""

    mode: str
    text_embedding: np.ndarray | None = None
    target: np.ndarray | None = None
    mask: np.ndarray | None = None
    eta: float = DEFAULT_ETA
    momentum: float = DEFAULT_MOMENTUM
    scales: list[int] | None = None
    sigma_mode: str = "auto"
    literal_update: bool = False

    def resolve_scales(self, num_scales: int) -> list[int]:
        # An empty range is legal and turns the update off entirely; the
        # run then matches unguided sampling (masked modes still anchor
        # outside the region, which is a property of the mode, not the
        # range).
        if self.scales is None:
            resolved = list(range(num_scales - 1))
        else:
            resolved = sorted(set(self.scales))
        if resolved and (resolved[0] < 0 or resolved[-1] >= num_scales):
            raise InvalidConfigError(
                f"guided scales {resolved} outside [0, {num_scales - 1}]"
            )
        return resolved

    def validate(self) -> "GuidanceSpec":
        if self.mode not in MODES:
            raise InvalidConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode in (TEXT_FULL, TEXT_ROI) and self.text_embedding is None:
            raise InvalidConfigError(f"{self.mode} requires a text embedding")
        if self.mode in (TEXT_ROI, ROI_CONTENT) and self.mask is None:
            raise InvalidConfigError(f"{self.mode} requires a mask")
        if self.mode == ROI_CONTENT and self.target is None:
            raise InvalidConfigError("roi-content requires a target image")
        if not 0.0 <= self.eta <= 1.0 or not 0.0 <= self.momentum <= 1.0:
            raise InvalidConfigError(
                f"eta and momentum must be in [0,1], got {self.eta}, {self.momentum}"
            )
        if self.sigma_mode not in ("auto", "deterministic", "ancestral"):
            raise InvalidConfigError(f"unknown sigma_mode {self.sigma_mode!r}")
        return self


@dataclass
class GuidanceStepLog:
    scale: int
    t: int
    loss_before: float
    loss_after: float


class GuidanceRuntime:
    """Sampler hooks wired from a GuidanceSpec.

    Holds the resolved per-scale masks and targets plus the source pyramid
    used for outside-mask re-anchoring. Stateless across steps except for
    the loss log, which tests read to check descent behaviour.
    """

    def __init__(
        self,
        spec: GuidanceSpec,
        source_pyramid: ImagePyramid,
        embedder: Embedder | None = None,
    ):
        self.spec = spec.validate()
        self.pyramid = source_pyramid
        self.embedder = embedder
        self.scales = set(spec.resolve_scales(source_pyramid.num_scales))
        self.log: list[GuidanceStepLog] = []

        dims = source_pyramid.all_dims()
        if spec.mode == TEXT_FULL:
            self.masks = RoiMask(
                base=np.ones(dims[-1], dtype=np.float32),
                per_scale=[np.ones(d, dtype=np.float32) for d in dims],
                provenance="full-frame",
            )
        else:
            self.masks = mask_pyramid(spec.mask, dims)

        self.targets: list[np.ndarray] | None = None
        if spec.mode == ROI_CONTENT:
            finest = np.asarray(spec.target, dtype=np.float32)
            if finest.shape[:2] != dims[-1]:
                raise InvalidInputError(
                    f"target dims {finest.shape[:2]} != source dims {dims[-1]}"
                )
            self.targets = [resample(finest, d) for d in dims]

        if spec.mode in (TEXT_FULL, TEXT_ROI):
            if embedder is None:
                raise InvalidConfigError("text guidance requires an embedder")
            e = np.asarray(spec.text_embedding, dtype=np.float32)
            norm = float(np.linalg.norm(e))
            if norm < 1e-12:
                raise InvalidInputError("text embedding has zero norm")
            self.text_embedding = e / norm

    def guided(self, scale: int) -> bool:
        return scale in self.scales

    # -- hooks ------------------------------------------------------------

    def sigma_override(self, state: SamplerState, schedule: DiffusionSchedule):
        if not self.guided(state.scale):
            return None
        mode = self.spec.sigma_mode
        if mode == "deterministic":
            return 0.0
        if mode == "ancestral":
            return schedule.ancestral_sigma(state.t)
        if self.spec.mode in (TEXT_FULL, TEXT_ROI):
            return schedule.ancestral_sigma(state.t)
        return None

    def edit_clean(self, clean: np.ndarray, state: SamplerState) -> np.ndarray:
        if not self.guided(state.scale):
            return clean
        mask = self.masks.at(state.scale)
        if self.spec.mode == ROI_CONTENT:
            return roi_content_update(
                clean, self.targets[state.scale], mask, self.spec.eta
            )
        loss_before, grad = clip_loss_and_grad(clean, self.text_embedding, self.embedder)
        if not np.isfinite(grad).all():
            raise GuidanceError(
                "non-finite guidance gradient", scale=state.scale, timestep=state.t
            )
        updated = text_guided_update(
            clean,
            grad,
            mask,
            self.spec.eta,
            self.spec.momentum,
            state.clean_prev,
            literal=self.spec.literal_update,
        )
        e_after = self.embedder.embed_image(updated)
        self.log.append(
            GuidanceStepLog(
                scale=state.scale,
                t=state.t,
                loss_before=loss_before,
                loss_after=clip_loss(e_after, self.text_embedding),
            )
        )
        return updated

    def after_step(
        self, x_next: np.ndarray, state: SamplerState, info: StepInfo
    ) -> np.ndarray:
        # The outside-mask anchor runs at every scale, unlike the text
        # update: the finest scale is never edited but still has to track
        # the source outside the region.
        if self.spec.mode == TEXT_FULL:
            return x_next
        mask = self.masks.at(state.scale)
        if mask.min() >= 1.0:
            return x_next
        source_path = self._source_step(state, info)
        m3 = mask[:, :, None]
        return (m3 * x_next + (1.0 - m3) * source_path).astype(np.float32)

    def _source_step(self, state: SamplerState, info: StepInfo) -> np.ndarray:
        """The source re-noised to the level the next step expects.

        Replaying the model's own noise prediction here would compound
        its error step over step, so the anchor draws fresh keyed noise
        instead. noise_coeff**2 + sigma**2 recovers 1 - alpha_bar(t-1)
        exactly, and that combined scale vanishes at t-1 == 0, where the
        anchor lands on the source itself.
        """
        src = self.pyramid.scales[state.scale]
        blur = self.pyramid.blurred[state.scale]
        mix = info.gamma_prev * blur + (1.0 - info.gamma_prev) * src
        out = info.sqrt_ab_prev * mix
        noise_scale = float(np.hypot(info.noise_coeff, info.sigma))
        if noise_scale > 0.0:
            eps = anchor_noise(state.seed, state.scale, state.t, src.shape)
            out = out + noise_scale * eps
        return out


class SourceAnchorHooks:
    """Reconstruction hooks: every step is re-anchored fully to the source.

    Equivalent to region guidance with an all-zero mask and no edit; used as
    the baseline that masked edits are compared against.
    """

    def __init__(self, source_pyramid: ImagePyramid, scales: list[int] | None = None):
        self.pyramid = source_pyramid
        if scales is None:
            scales = list(range(source_pyramid.num_scales))
        self.scales = set(scales)

    def sigma_override(self, state, schedule):
        return None

    def edit_clean(self, clean, state):
        return clean

    def after_step(self, x_next, state, info):
        if state.scale not in self.scales:
            return x_next
        src = self.pyramid.scales[state.scale]
        blur = self.pyramid.blurred[state.scale]
        mix = info.gamma_prev * blur + (1.0 - info.gamma_prev) * src
        out = info.sqrt_ab_prev * mix
        noise_scale = float(np.hypot(info.noise_coeff, info.sigma))
        if noise_scale > 0.0:
            eps = anchor_noise(state.seed, state.scale, state.t, src.shape)
            out = out + noise_scale * eps
        return out.astype(np.float32)
