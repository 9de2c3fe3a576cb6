"""Fully-convolutional noise predictor conditioned on timestep and scale.

The network never changes spatial resolution, so one set of weights serves
every level of the pyramid. Each residual block injects a conditioning
vector computed from sinusoidal encodings of (t, s); the final projection
is zero-initialized so an untrained model predicts zero noise.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
import torch.nn as nn

from .errors import InvalidConfigError


@dataclass
class DenoiserConfig:
    channels: int = 64
    blocks: int = 4
    embed_dim: int = 64
    in_channels: int = 3

    def validate(self) -> "DenoiserConfig":
        if self.channels < 1 or self.blocks < 1 or self.in_channels < 1:
            raise InvalidConfigError(f"bad denoiser config {asdict(self)}")
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise InvalidConfigError(f"embed_dim must be even and >= 2, got {self.embed_dim}")
        return self


def sinusoidal_embedding(values: torch.Tensor, dim: int) -> torch.Tensor:
    """Interleaved sin/cos position code.

    Entry 2i is sin(v / 10000^(2i/dim)) and entry 2i+1 is the matching cos,
    so pairs share a frequency. values is any float tensor of shape (B,).
    """
    if dim % 2:
        raise InvalidConfigError(f"embedding dim must be even, got {dim}")
    half = dim // 2
    dtype = values.dtype if values.is_floating_point() else torch.float32
    exponents = torch.arange(half, dtype=dtype, device=values.device) * (2.0 / dim)
    freqs = torch.pow(torch.tensor(10000.0, dtype=dtype, device=values.device), -exponents)
    angles = values.to(dtype)[:, None] * freqs[None, :]
    out = torch.empty(values.shape[0], dim, dtype=dtype, device=values.device)
    out[:, 0::2] = torch.sin(angles)
    out[:, 1::2] = torch.cos(angles)
    return out


class TimeScaleEmbedding(nn.Module):
    """Maps (t, s) to the conditioning vector fed into every block."""

    def __init__(self, embed_dim: int):
        super().__init__()
        self.embed_dim = embed_dim
        self.fc1 = nn.Linear(2 * embed_dim, 4 * embed_dim)
        self.fc2 = nn.Linear(4 * embed_dim, embed_dim)
        self.act = nn.GELU()

    def forward(self, t: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        code = torch.cat(
            [
                sinusoidal_embedding(t, self.embed_dim),
                sinusoidal_embedding(s, self.embed_dim),
            ],
            dim=1,
        )
        return self.fc2(self.act(self.fc1(code)))


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, embed_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect")
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect")
        self.proj = nn.Linear(embed_dim, channels)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        h = self.act(self.conv1(x))
        h = h + self.proj(self.act(cond))[:, :, None, None]
        return x + self.conv2(h)


class Denoiser(nn.Module):
    """Conv stack that predicts the noise component of its input."""

    def __init__(self, config: DenoiserConfig | None = None):
        super().__init__()
        self.config = (config or DenoiserConfig()).validate()
        c = self.config
        self.embed = TimeScaleEmbedding(c.embed_dim)
        self.head = nn.Conv2d(c.in_channels, c.channels, 3, padding=1, padding_mode="reflect")
        self.blocks = nn.ModuleList(
            ResidualBlock(c.channels, c.embed_dim) for _ in range(c.blocks)
        )
        self.tail = nn.Conv2d(c.channels, c.in_channels, 3, padding=1, padding_mode="reflect")
        nn.init.zeros_(self.tail.weight)
        nn.init.zeros_(self.tail.bias)

    def forward(self, x: torch.Tensor, t: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        cond = self.embed(t, s)
        h = self.head(x)
        for block in self.blocks:
            h = block(h, cond)
        return self.tail(h)


def image_to_batch(image, device: torch.device | None = None) -> torch.Tensor:
    """(H, W, C) float32 array to a (1, C, H, W) tensor."""
    tensor = torch.from_numpy(image.copy()) if not torch.is_tensor(image) else image
    return tensor.permute(2, 0, 1).unsqueeze(0).to(device or "cpu")


def batch_to_image(batch: torch.Tensor):
    """(1, C, H, W) tensor back to an (H, W, C) float32 array."""
    return batch.squeeze(0).permute(1, 2, 0).detach().cpu().numpy()


def predict_noise(model: Denoiser, image, t: int, scale: int) -> "np.ndarray":
    """Single-image convenience wrapper around the batched forward pass."""
    batch = image_to_batch(image)
    tt = torch.tensor([float(t)])
    ss = torch.tensor([float(scale)])
    with torch.no_grad():
        eps = model(batch, tt, ss)
    return batch_to_image(eps)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
