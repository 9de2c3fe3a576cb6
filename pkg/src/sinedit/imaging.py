"""Image and mask file I/O.

Images travel through the library as ``float32`` arrays of shape (H, W, 3)
with values in [-1, 1]. Files are read and written as lossless PNG so that
metric computations see exactly the stored pixels. Masks are single-channel
PNGs whose values are strictly {0, 255}; in memory they become float {0, 1}
arrays of shape (H, W).
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import InvalidInputError


def require_image(image: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate an (H, W, 3) float image and return it as float32."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} has empty spatial dims {arr.shape}")
    arr = arr.astype(np.float32, copy=False)
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def to_unit_range(pixels: np.ndarray) -> np.ndarray:
    """uint8 [0, 255] -> float32 [-1, 1]."""
    return pixels.astype(np.float32) / 127.5 - 1.0


def from_unit_range(image: np.ndarray) -> np.ndarray:
    """float [-1, 1] -> uint8, clipping out-of-range values."""
    arr = np.clip(image, -1.0, 1.0)
    return np.round((arr + 1.0) * 127.5).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """Read an RGB image file into a [-1, 1] float32 (H, W, 3) array."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return to_unit_range(np.asarray(rgb))


def save_image(image: np.ndarray, path) -> None:
    """Write a [-1, 1] image as lossless PNG."""
    arr = require_image(image)
    Image.fromarray(from_unit_range(arr), mode="RGB").save(path, format="PNG")


def image_bytes(image: np.ndarray) -> bytes:
    """Encode a [-1, 1] image to PNG bytes."""
    import io

    buf = io.BytesIO()
    arr = require_image(image)
    Image.fromarray(from_unit_range(arr), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def require_mask(mask: np.ndarray, name: str = "mask") -> np.ndarray:
    """Validate a binary mask and return it as float32 {0, 1} of shape (H, W).

    Accepts {0, 1} or {0, 255} encodings; anything else is rejected.
    """
    arr = np.asarray(mask)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be single-channel (H, W), got shape {arr.shape}")
    values = np.unique(arr)
    if np.isin(values, (0, 1)).all():
        return arr.astype(np.float32)
    if np.isin(values, (0, 255)).all():
        return (arr > 0).astype(np.float32)
    raise InvalidInputError(
        f"{name} must be binary with values in {{0, 1}} or {{0, 255}}; found values {values[:8]}"
    )


def load_mask(path) -> np.ndarray:
    """Read a mask PNG into a {0, 1} float32 (H, W) array.

    The file must be single-channel with values strictly in {0, 255}.
    """
    with Image.open(path) as im:
        if im.mode not in ("L", "1", "P"):
            im = im.convert("L")
        arr = np.asarray(im.convert("L"))
    return require_mask(arr, name=str(path))


def save_mask(mask: np.ndarray, path) -> None:
    """Write a {0, 1} mask as a single-channel {0, 255} PNG."""
    arr = require_mask(mask)
    Image.fromarray((arr * 255).astype(np.uint8), mode="L").save(path, format="PNG")
