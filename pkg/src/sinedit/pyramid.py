"""Multi-scale image pyramid with its blurry counterpart.

Scale 0 is the coarsest level; the last scale is the original image. Each
coarser level is produced by bicubic downsampling with a fixed ratio, and the
"blurry" pyramid holds what each level looks like after round-tripping
through the next-coarser level (the upsampling blur the denoiser must learn
to remove). At the coarsest level there is no coarser neighbour, so the
blurry image is the clean one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import InvalidInputError
from .imaging import require_image

DEFAULT_FACTOR = 4.0 / 3.0
DEFAULT_MIN_DIM = 24


def round_half_up(value: float) -> int:
    """Deterministic rounding used for pyramid dims: 0.5 always rounds up."""
    return int(math.floor(value + 0.5))


def resample(image: np.ndarray, target_dims: tuple[int, int]) -> np.ndarray:
    """Bicubic resize to (height, width).

    Works on (H, W, C) images and (H, W) single-channel arrays. Values may
    overshoot their input range (cubic lobes); no clipping happens here.
    Resizing to the source dims returns an identical copy.
    """
    th, tw = int(target_dims[0]), int(target_dims[1])
    if th <= 0 or tw <= 0:
        raise InvalidInputError(f"target dims must be positive, got {(th, tw)}")
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        squeeze = True
        arr = arr[:, :, None]
    elif arr.ndim == 3:
        squeeze = False
    else:
        raise InvalidInputError(f"expected 2-D or 3-D array, got shape {arr.shape}")
    if arr.shape[:2] == (th, tw):
        out = arr.copy()
    else:
        t = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]
        r = F.interpolate(t, size=(th, tw), mode="bicubic", align_corners=False)
        out = r[0].numpy().transpose(1, 2, 0)
    return out[:, :, 0] if squeeze else out


@dataclass
class ImagePyramid:
    """Clean and blurry image stacks, coarsest first.

    scales[s] has the dims of level s; blurred[s] is the same level seen
    through the next-coarser one (blurred[0] is scales[0] itself).
    """

    scales: list[np.ndarray]
    blurred: list[np.ndarray]
    factor: float
    min_dim: int = DEFAULT_MIN_DIM

    @property
    def num_scales(self) -> int:
        return len(self.scales)

    def dims(self, s: int) -> tuple[int, int]:
        h, w = self.scales[s].shape[:2]
        return h, w

    def all_dims(self) -> list[tuple[int, int]]:
        return [self.dims(s) for s in range(self.num_scales)]


def pyramid_dims(height: int, width: int, factor: float, min_dim: int) -> list[tuple[int, int]]:
    """Dims per scale, coarsest first. Divides by ``factor`` (round-half-up)
    until another division would drop below ``min_dim``."""
    if factor <= 1.0:
        raise InvalidInputError(f"downsampling factor must be > 1, got {factor}")
    if min(height, width) < min_dim:
        raise InvalidInputError(
            f"image {height}x{width} is smaller than the minimum pyramid dim {min_dim}"
        )
    dims = [(height, width)]
    while True:
        h, w = dims[-1]
        nh, nw = round_half_up(h / factor), round_half_up(w / factor)
        if min(nh, nw) < min_dim:
            break
        dims.append((nh, nw))
    dims.reverse()
    return dims


def build_pyramid(
    image: np.ndarray,
    factor: float = DEFAULT_FACTOR,
    min_dim: int = DEFAULT_MIN_DIM,
) -> ImagePyramid:
    """Construct the clean and blurry pyramids for one source image.

    The finest level is the source itself; each coarser level is a bicubic
    downsample of the previous one. blurred[s] = upsample(scales[s-1]) at the
    dims of level s, and blurred[0] is bit-identical to scales[0].
    """
    arr = require_image(image)
    dims = pyramid_dims(arr.shape[0], arr.shape[1], factor, min_dim)
    n = len(dims)
    scales: list[np.ndarray | None] = [None] * n
    scales[n - 1] = arr
    for s in range(n - 2, -1, -1):
        scales[s] = resample(scales[s + 1], dims[s])
    blurred: list[np.ndarray] = [scales[0].copy()]
    for s in range(1, n):
        blurred.append(resample(scales[s - 1], dims[s]))
    return ImagePyramid(scales=list(scales), blurred=blurred, factor=float(factor), min_dim=int(min_dim))
