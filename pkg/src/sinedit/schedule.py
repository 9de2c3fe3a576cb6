"""Diffusion schedules and the closed-form forward process.

One linear beta schedule is shared by every scale. The coarsest scale runs
the full T0 steps; every finer scale enters part-way at Ts < T0 so the
upsampled estimate it starts from is noised but not destroyed. On top of the
usual DDPM quantities, each (scale, t) carries a mixing weight that slides
the forward process between the clean image (t = 0) and its blurry version
(t = T[s]); the coarsest scale has no blurry counterpart so its mixing
weight is identically zero.

Timesteps are 1-based: beta/alpha_bar for step t live at index t - 1, and
``alpha_bar(0) == 1`` by definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

DEFAULT_T0 = 100
DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 0.02


def default_entry_step(t0: int) -> int:
    """Default partial-noising depth for scales above the coarsest: 0.8 * T0."""
    return max(1, int(np.ceil(0.8 * t0)))


@dataclass
class ScheduleParams:
    """Everything needed to rebuild a schedule; serialized in checkpoints."""

    t0: int = DEFAULT_T0
    ts: int | None = None
    beta_min: float = DEFAULT_BETA_MIN
    beta_max: float = DEFAULT_BETA_MAX
    stochastic: bool = False

    def resolve_ts(self) -> int:
        return default_entry_step(self.t0) if self.ts is None else self.ts


@dataclass
class DiffusionSchedule:
    """Per-scale step counts plus the shared beta/alpha ladders.

    mix_weights[s] has length steps_per_scale[s] + 1 and is indexed directly
    by t (0 at t=0, 1 at t=T[s] for s > 0). sigmas[s] is indexed the same
    way; sigmas[s][t] is the noise magnitude of the reverse step taken at t.
    """

    steps_per_scale: list[int]
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    mix_weights: list[np.ndarray]
    sigmas: list[np.ndarray]
    stochastic: bool

    @property
    def num_scales(self) -> int:
        return len(self.steps_per_scale)

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])

    def mix_weight(self, s: int, t: int) -> float:
        return float(self.mix_weights[s][t])

    def sigma(self, s: int, t: int) -> float:
        return float(self.sigmas[s][t])

    def ancestral_sigma(self, t: int) -> float:
        """Posterior std of the single-step reverse kernel at step t."""
        if t <= 1:
            return 0.0
        ab_t = self.alpha_bar(t)
        ab_prev = self.alpha_bar(t - 1)
        beta_t = float(self.betas[t - 1])
        return float(np.sqrt(beta_t * (1.0 - ab_prev) / (1.0 - ab_t)))


def make_schedule(
    t0: int = DEFAULT_T0,
    ts: int | None = None,
    num_scales: int = 1,
    beta_min: float = DEFAULT_BETA_MIN,
    beta_max: float = DEFAULT_BETA_MAX,
    stochastic: bool = False,
) -> DiffusionSchedule:
    """Build the full schedule for a pyramid of ``num_scales`` levels.

    betas run linearly from beta_min to beta_max over t0 steps. Mixing
    weights are linear in t with the boundary values 0 and 1 (identically 0
    at the coarsest scale). sigmas are all zero in the deterministic
    configuration and equal the ancestral posterior std otherwise.
    """
    if t0 < 1:
        raise InvalidConfigError(f"t0 must be >= 1, got {t0}")
    if ts is None:
        ts = default_entry_step(t0)
    if not 1 <= ts <= t0:
        raise InvalidConfigError(f"ts must be in [1, t0={t0}], got {ts}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise InvalidConfigError(
            f"need 0 < beta_min <= beta_max < 1, got beta_min={beta_min} beta_max={beta_max}"
        )
    if num_scales < 1:
        raise InvalidConfigError(f"num_scales must be >= 1, got {num_scales}")

    betas = np.linspace(beta_min, beta_max, t0, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)

    steps = [t0] + [ts] * (num_scales - 1)
    mix_weights = [np.zeros(t0 + 1, dtype=np.float64)]
    for s in range(1, num_scales):
        mix_weights.append(np.linspace(0.0, 1.0, steps[s] + 1, dtype=np.float64))

    sched = DiffusionSchedule(
        steps_per_scale=steps,
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        mix_weights=mix_weights,
        sigmas=[],
        stochastic=stochastic,
    )
    for s, t_s in enumerate(steps):
        sig = np.zeros(t_s + 1, dtype=np.float64)
        if stochastic:
            for t in range(1, t_s + 1):
                sig[t] = sched.ancestral_sigma(t)
        sched.sigmas.append(sig)
    return sched


def schedule_from_params(params: ScheduleParams, num_scales: int) -> DiffusionSchedule:
    return make_schedule(
        t0=params.t0,
        ts=params.ts,
        num_scales=num_scales,
        beta_min=params.beta_min,
        beta_max=params.beta_max,
        stochastic=params.stochastic,
    )


def forward_sample(
    clean: np.ndarray,
    blurred: np.ndarray,
    t: int,
    scale: int,
    noise: np.ndarray,
    schedule: DiffusionSchedule,
) -> np.ndarray:
    """Noisy image at (scale, t) from the clean/blurry pair and a noise draw.

    Exact affine combination: sqrt(abar_t) * [g * blurred + (1-g) * clean]
    + sqrt(1 - abar_t) * noise, with g the mixing weight at (scale, t).
    Nothing is clipped.
    """
    clean = np.asarray(clean, dtype=np.float32)
    blurred = np.asarray(blurred, dtype=np.float32)
    noise = np.asarray(noise, dtype=np.float32)
    if clean.shape != blurred.shape or clean.shape != noise.shape:
        raise InvalidInputError(
            f"shape mismatch: clean {clean.shape}, blurred {blurred.shape}, noise {noise.shape}"
        )
    if not 1 <= t <= schedule.steps_per_scale[scale]:
        raise InvalidInputError(
            f"t={t} outside [1, {schedule.steps_per_scale[scale]}] at scale {scale}"
        )
    ab = schedule.alpha_bar(t)
    g = schedule.mix_weight(scale, t)
    base = g * blurred + (1.0 - g) * clean
    return (np.sqrt(ab) * base + np.sqrt(1.0 - ab) * noise).astype(np.float32)
