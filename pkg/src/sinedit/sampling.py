"""Reverse multi-scale sampling.

Generation starts from pure noise at the coarsest scale. Within a scale the
chain walks t from T[s] down to 0; each step predicts the noise, deblends a
clean estimate from the blurry anchor, lets an optional guidance object
edit that estimate, re-blends at t-1 and forms the next noisy image. When a
scale finishes, the clean result is upsampled, becomes the next scale's
blurry anchor, and is re-noised at that scale's entry level.

All stochastic draws come from counter-keyed generators indexed by
(seed, kind, scale, t), so a run is a pure function of its seed, and two
runs that consume different numbers of draws still agree on shared ones.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Protocol

import numpy as np
import torch

from .denoiser import Denoiser, batch_to_image, image_to_batch
from .errors import InvalidInputError
from .pyramid import ImagePyramid, resample
from .schedule import DiffusionSchedule

# deblending is skipped once the mixing weight is this close to 1
GAMMA_GUARD = 1.0 - 1e-4

_KIND_ENTRY = 0
_KIND_STEP = 1
_KIND_ANCHOR = 2

PredictFn = Callable[[np.ndarray, int, int], np.ndarray]


def entry_noise(seed: int, scale: int, shape: tuple[int, ...]) -> np.ndarray:
    """Noise injected when the chain enters a scale."""
    rng = np.random.default_rng([seed, _KIND_ENTRY, scale, 0])
    return rng.standard_normal(shape, dtype=np.float32)


def step_noise(seed: int, scale: int, t: int, shape: tuple[int, ...]) -> np.ndarray:
    """The z draw of a stochastic reverse step at (scale, t)."""
    rng = np.random.default_rng([seed, _KIND_STEP, scale, t])
    return rng.standard_normal(shape, dtype=np.float32)


def anchor_noise(seed: int, scale: int, t: int, shape: tuple[int, ...]) -> np.ndarray:
    """Noise used when re-noising the source along the guided trajectory.

    Keyed separately from the step stream so an anchored run stays
    reproducible without perturbing the z draws of the sampler itself.
    """
    rng = np.random.default_rng([seed, _KIND_ANCHOR, scale, t])
    return rng.standard_normal(shape, dtype=np.float32)


@dataclass
class SamplerState:
    scale: int
    t: int
    x: np.ndarray
    blurred: np.ndarray
    clean_prev: np.ndarray | None
    seed: int


@dataclass
class StepInfo:
    """Coefficients of the step just taken, for hooks that mirror it."""

    eps_hat: np.ndarray
    z: np.ndarray | None
    sigma: float
    sqrt_ab_prev: float
    noise_coeff: float
    gamma_prev: float


class SamplingHooks(Protocol):
    """Guidance surface invoked by reverse_step; all methods optional edits."""

    def sigma_override(self, state: SamplerState, schedule: DiffusionSchedule) -> float | None:
        ...

    def edit_clean(self, clean: np.ndarray, state: SamplerState) -> np.ndarray:
        ...

    def after_step(
        self, x_next: np.ndarray, state: SamplerState, info: StepInfo
    ) -> np.ndarray:
        ...


class IdentityHooks:
    """No-op guidance; sampling with it matches unguided sampling bitwise."""

    def sigma_override(self, state, schedule):
        return None

    def edit_clean(self, clean, state):
        return clean

    def after_step(self, x_next, state, info):
        return x_next


def deblend(mix: np.ndarray, blurred: np.ndarray, gamma: float) -> np.ndarray:
    """Invert the blur blend; near gamma = 1 the estimate is the mix itself."""
    if gamma > GAMMA_GUARD:
        return mix
    if gamma == 0.0:
        return mix
    return (mix - gamma * blurred) / (1.0 - gamma)


def reblend(clean: np.ndarray, blurred: np.ndarray, gamma: float) -> np.ndarray:
    return gamma * blurred + (1.0 - gamma) * clean


def reverse_step(
    state: SamplerState,
    predict: PredictFn,
    schedule: DiffusionSchedule,
    hooks: SamplingHooks | None = None,
) -> SamplerState:
    """One step t -> t-1 at the current scale."""
    if state.t < 1:
        raise InvalidInputError(f"reverse_step needs t >= 1, got {state.t}")
    s, t = state.scale, state.t
    eps_hat = np.asarray(predict(state.x, t, s), dtype=np.float32)
    if eps_hat.shape != state.x.shape:
        raise InvalidInputError(
            f"predicted noise shape {eps_hat.shape} != image shape {state.x.shape}"
        )

    ab_t = schedule.alpha_bar(t)
    mix = (state.x - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
    clean = deblend(mix, state.blurred, schedule.mix_weight(s, t))

    if hooks is not None:
        clean = hooks.edit_clean(clean, state)

    gamma_prev = schedule.mix_weight(s, t - 1)
    mix_prev = reblend(clean, state.blurred, gamma_prev)

    sigma = None
    if hooks is not None:
        sigma = hooks.sigma_override(state, schedule)
    if sigma is None:
        sigma = schedule.sigma(s, t)

    ab_prev = schedule.alpha_bar(t - 1)
    sigma = min(float(sigma), float(np.sqrt(max(0.0, 1.0 - ab_prev))))
    noise_coeff = float(np.sqrt(max(0.0, 1.0 - ab_prev - sigma * sigma)))

    z = None
    if sigma > 0.0:
        z = step_noise(state.seed, s, t, state.x.shape)
    x_next = np.sqrt(ab_prev) * mix_prev + noise_coeff * eps_hat
    if z is not None:
        x_next = x_next + sigma * z
    x_next = x_next.astype(np.float32)

    info = StepInfo(
        eps_hat=eps_hat,
        z=z,
        sigma=sigma,
        sqrt_ab_prev=float(np.sqrt(ab_prev)),
        noise_coeff=noise_coeff,
        gamma_prev=gamma_prev,
    )
    if hooks is not None:
        x_next = hooks.after_step(x_next, state, info)

    return replace(state, t=t - 1, x=x_next, clean_prev=clean)


def ascend_scale(
    clean: np.ndarray,
    schedule: DiffusionSchedule,
    next_scale: int,
    target_dims: tuple[int, int],
    noise: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Upsample a finished scale and re-noise at the next scale's entry level.

    Returns the new noisy image and the upsampled estimate, which serves as
    the next scale's blurry anchor.
    """
    up = resample(clean, target_dims)
    if noise.shape != up.shape:
        raise InvalidInputError(f"noise shape {noise.shape} != target {up.shape}")
    t_entry = schedule.steps_per_scale[next_scale]
    ab = schedule.alpha_bar(t_entry)
    x = (np.sqrt(ab) * up + np.sqrt(1.0 - ab) * noise).astype(np.float32)
    return x, up


class Sampler:
    """Runs full reverse passes for one trained model and source pyramid."""

    def __init__(
        self,
        model: Denoiser,
        pyramid: ImagePyramid,
        schedule: DiffusionSchedule,
    ):
        self.model = model
        self.pyramid = pyramid
        self.schedule = schedule

    def predict(self, x: np.ndarray, t: int, s: int) -> np.ndarray:
        batch = image_to_batch(np.ascontiguousarray(x))
        tt = torch.tensor([float(t)])
        ss = torch.tensor([float(s)])
        with torch.no_grad():
            eps = self.model(batch, tt, ss)
        return batch_to_image(eps)

    def run(
        self,
        seed: int = 0,
        hooks: SamplingHooks | None = None,
        on_step: Callable[[SamplerState], None] | None = None,
    ) -> np.ndarray:
        n = self.pyramid.num_scales
        h0, w0 = self.pyramid.dims(0)
        x = entry_noise(seed, 0, (h0, w0, 3))
        state = SamplerState(
            scale=0,
            t=self.schedule.steps_per_scale[0],
            x=x,
            blurred=np.zeros_like(x),
            clean_prev=None,
            seed=seed,
        )
        for s in range(n):
            while state.t > 0:
                state = reverse_step(state, self.predict, self.schedule, hooks)
                if on_step is not None:
                    on_step(state)
            if s == n - 1:
                break
            dims = self.pyramid.dims(s + 1)
            noise = entry_noise(seed, s + 1, (*dims, 3))
            x, anchor = ascend_scale(state.x, self.schedule, s + 1, dims, noise)
            state = SamplerState(
                scale=s + 1,
                t=self.schedule.steps_per_scale[s + 1],
                x=x,
                blurred=anchor,
                clean_prev=None,
                seed=seed,
            )
        return np.clip(state.x, -1.0, 1.0).astype(np.float32)


def sampler_from_trainer(trainer) -> Sampler:
    trainer.model.eval()
    return Sampler(trainer.model, trainer.pyramid, trainer.schedule)
