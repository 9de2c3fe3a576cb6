"""Single-image training loop.

Every optimization step draws one pyramid scale uniformly, a batch of
timesteps uniform over that scale's range, and fresh Gaussian noise, then
regresses the injected noise with an L1 objective (L2 behind a config
switch). All randomness for step k comes from a counter-keyed generator
seeded with (seed, k), so a run interrupted at any step and resumed from a
checkpoint replays the identical draw sequence and lands on identical
weights.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, asdict
from typing import Any, Callable

import numpy as np
import torch

from .checkpoint import CheckpointData, load_checkpoint, save_checkpoint
from .denoiser import Denoiser, DenoiserConfig
from .errors import InvalidConfigError, JobCancelledError, TrainingDivergedError
from .imaging import require_image
from .pyramid import DEFAULT_FACTOR, DEFAULT_MIN_DIM, ImagePyramid, build_pyramid
from .schedule import DiffusionSchedule, ScheduleParams, schedule_from_params

DEFAULT_EPOCHS = 12000


@dataclass
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = 16
    lr: float = 1e-3
    loss: str = "l1"
    seed: int = 0
    channels: int = 64
    blocks: int = 4
    embed_dim: int = 64
    t0: int = 100
    ts: int | None = None
    beta_min: float = 1e-4
    beta_max: float = 0.02
    stochastic: bool = False
    factor: float = DEFAULT_FACTOR
    min_dim: int = DEFAULT_MIN_DIM

    def validate(self) -> "TrainConfig":
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfigError(
                f"epochs and batch_size must be >= 1, got {self.epochs}, {self.batch_size}"
            )
        if self.lr <= 0:
            raise InvalidConfigError(f"lr must be positive, got {self.lr}")
        if self.loss not in ("l1", "l2"):
            raise InvalidConfigError(f"loss must be 'l1' or 'l2', got {self.loss!r}")
        return self

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            channels=self.channels, blocks=self.blocks, embed_dim=self.embed_dim
        )

    def schedule_params(self) -> ScheduleParams:
        return ScheduleParams(
            t0=self.t0,
            ts=self.ts,
            beta_min=self.beta_min,
            beta_max=self.beta_max,
            stochastic=self.stochastic,
        )


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Generator for one optimization step, independent of run history."""
    return np.random.default_rng([seed, step])


@dataclass
class StepDraw:
    scale: int
    timesteps: np.ndarray
    noise: np.ndarray


class Trainer:
    """Owns the model, optimizer, pyramid and step counter for one image."""

    def __init__(
        self,
        source: np.ndarray,
        config: TrainConfig,
        model: Denoiser,
        step: int = 0,
        loss_curve: list[float] | None = None,
    ):
        self.source = require_image(source)
        self.config = config.validate()
        self.model = model
        self.step = step
        self.loss_curve = list(loss_curve or [])
        self.pyramid: ImagePyramid = build_pyramid(
            self.source, factor=config.factor, min_dim=config.min_dim
        )
        self.schedule: DiffusionSchedule = schedule_from_params(
            config.schedule_params(), self.pyramid.num_scales
        )
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.lr)
        self._clean = [
            torch.from_numpy(a).permute(2, 0, 1).contiguous() for a in self.pyramid.scales
        ]
        self._blurred = [
            torch.from_numpy(a).permute(2, 0, 1).contiguous() for a in self.pyramid.blurred
        ]
        self._ab = torch.from_numpy(self.schedule.alpha_bars.astype(np.float32))
        self._mix = [
            torch.from_numpy(w.astype(np.float32)) for w in self.schedule.mix_weights
        ]

    @classmethod
    def new(cls, source: np.ndarray, config: TrainConfig | None = None) -> "Trainer":
        config = (config or TrainConfig()).validate()
        torch.manual_seed(config.seed)
        model = Denoiser(config.denoiser_config())
        return cls(source, config, model)

    # -- per-step sampling ------------------------------------------------

    def draw_batch(self, step: int) -> StepDraw:
        """All random choices for one step; no gradients involved."""
        rng = step_rng(self.config.seed, step)
        scale = int(rng.integers(self.pyramid.num_scales))
        t_max = self.schedule.steps_per_scale[scale]
        timesteps = rng.integers(1, t_max + 1, size=self.config.batch_size)
        h, w = self.pyramid.dims(scale)
        noise = rng.standard_normal(
            (self.config.batch_size, 3, h, w), dtype=np.float32
        )
        return StepDraw(scale=scale, timesteps=timesteps, noise=noise)

    def _noisy_batch(self, draw: StepDraw) -> tuple[torch.Tensor, torch.Tensor]:
        t_idx = torch.from_numpy(draw.timesteps.astype(np.int64))
        ab = self._ab[t_idx - 1][:, None, None, None]
        g = self._mix[draw.scale][t_idx][:, None, None, None]
        clean = self._clean[draw.scale].unsqueeze(0)
        blurred = self._blurred[draw.scale].unsqueeze(0)
        eps = torch.from_numpy(draw.noise)
        base = g * blurred + (1.0 - g) * clean
        x_t = torch.sqrt(ab) * base + torch.sqrt(1.0 - ab) * eps
        return x_t, eps

    def train_step(self, capture: dict[str, Any] | None = None) -> float:
        draw = self.draw_batch(self.step)
        x_t, eps = self._noisy_batch(draw)
        t = torch.from_numpy(draw.timesteps.astype(np.float32))
        s = torch.full((self.config.batch_size,), float(draw.scale))

        self.optimizer.zero_grad(set_to_none=True)
        predicted = self.model(x_t, t, s)
        residual = eps - predicted
        if self.config.loss == "l1":
            loss = residual.abs().mean()
        else:
            loss = residual.square().mean()
        value = float(loss.detach())
        if not np.isfinite(value):
            raise TrainingDivergedError(self.step)
        loss.backward()
        self.optimizer.step()

        if capture is not None:
            capture["scale"] = draw.scale
            capture["timesteps"] = draw.timesteps.copy()
            capture["noise"] = draw.noise.copy()
            capture["predicted"] = predicted.detach().numpy().copy()
            capture["loss"] = value
        self.loss_curve.append(value)
        self.step += 1
        return value

    def run(
        self,
        num_steps: int | None = None,
        progress: Callable[[int, float], None] | None = None,
        should_stop: Callable[[], bool] | None = None,
    ) -> None:
        """Advance to config.epochs, or by num_steps if given."""
        target = self.step + num_steps if num_steps is not None else self.config.epochs
        while self.step < target:
            if should_stop is not None and should_stop():
                raise JobCancelledError(f"training stopped at step {self.step}")
            value = self.train_step()
            if progress is not None:
                progress(self.step, value)

    # -- persistence ------------------------------------------------------

    def to_checkpoint(self) -> CheckpointData:
        arrays: dict[str, np.ndarray] = {}
        opt_steps: dict[str, int] = {}
        params = dict(self.model.named_parameters())
        for name, p in params.items():
            arrays[f"param/{name}"] = p.detach().numpy().copy()
            state = self.optimizer.state.get(p)
            if state:
                arrays[f"opt/{name}/exp_avg"] = state["exp_avg"].numpy().copy()
                arrays[f"opt/{name}/exp_avg_sq"] = state["exp_avg_sq"].numpy().copy()
                opt_steps[name] = int(state["step"])
        arrays["source"] = self.source.copy()
        arrays["loss_curve"] = np.asarray(self.loss_curve, dtype=np.float64)
        meta = {
            "kind": "sinedit-model",
            "step": self.step,
            "train": _jsonify(asdict(self.config)),
            "denoiser": _jsonify(asdict(self.model.config)),
            "opt_steps": opt_steps,
            "source_sha256": hashlib.sha256(self.source.tobytes()).hexdigest(),
        }
        return CheckpointData(arrays=arrays, meta=meta)

    def save(self, path: str) -> str:
        return save_checkpoint(path, self.to_checkpoint())

    @classmethod
    def from_checkpoint_data(cls, data: CheckpointData) -> "Trainer":
        config = TrainConfig(**data.meta["train"])
        model = Denoiser(DenoiserConfig(**data.meta["denoiser"]))
        trainer = cls(
            data.arrays["source"],
            config,
            model,
            step=int(data.meta["step"]),
            loss_curve=[float(v) for v in data.arrays.get("loss_curve", [])],
        )
        params = dict(model.named_parameters())
        with torch.no_grad():
            for name, p in params.items():
                p.copy_(torch.from_numpy(data.arrays[f"param/{name}"].copy()))
        opt_steps = data.meta.get("opt_steps", {})
        for name, p in params.items():
            if f"opt/{name}/exp_avg" in data.arrays:
                trainer.optimizer.state[p] = {
                    "step": torch.tensor(float(opt_steps[name])),
                    "exp_avg": torch.from_numpy(data.arrays[f"opt/{name}/exp_avg"].copy()),
                    "exp_avg_sq": torch.from_numpy(
                        data.arrays[f"opt/{name}/exp_avg_sq"].copy()
                    ),
                }
        return trainer

    @classmethod
    def from_checkpoint(cls, path: str) -> "Trainer":
        return cls.from_checkpoint_data(load_checkpoint(path))


def _jsonify(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def train(
    source: np.ndarray,
    config: TrainConfig | None = None,
    checkpoint_path: str | None = None,
    progress: Callable[[int, float], None] | None = None,
) -> Trainer:
    """Train from scratch; optionally persist the result."""
    trainer = Trainer.new(source, config)
    trainer.run(progress=progress)
    if checkpoint_path is not None:
        trainer.save(checkpoint_path)
    return trainer
