"""Image/text embedding backends.

Everything downstream (guidance, scoring) talks to the small Embedder
protocol. The mock backend is fully deterministic and self-contained so the
whole edit pipeline runs offline; a real vision-language model plugs in
through the adapter without touching callers. The image branch must be
differentiable with respect to pixels because guidance backpropagates a
cosine loss through it.
"""

from __future__ import annotations

import hashlib
import importlib
import os
import re
from typing import Protocol, runtime_checkable

import numpy as np
import torch
import torch.nn.functional as F

from .errors import EmbedderUnavailableError, InvalidInputError

DEFAULT_DIM = 32
_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Rec. 601 luma weights for the grayscale feature grid
_LUMA = (0.299, 0.587, 0.114)


@runtime_checkable
class Embedder(Protocol):
    dim: int

    def embed_text(self, text: str) -> np.ndarray:
        ...

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        ...

    def embed_image_tensor(self, image: torch.Tensor) -> torch.Tensor:
        """Differentiable path; image is an (H, W, 3) float tensor."""
        ...


def _require_text(text: str) -> list[str]:
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        raise InvalidInputError(f"text has no tokens: {text!r}")
    return tokens


class MockEmbedder:
    """Deterministic stand-in for a vision-language model.

    Text: each lowercase token hashes to a fixed Gaussian vector; the sum
    over tokens is normalized, so token order never matters. Image: a small
    feature vector (per-channel mean and variance, a 4x4 average-pooled
    luminance grid, and a constant) goes through a fixed random linear map
    and is normalized. The map is built once from a seed, so embeddings are
    reproducible across processes.
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        if dim < 2:
            raise InvalidInputError(f"dim must be >= 2, got {dim}")
        self.dim = dim
        # 3 means + 3 variances + 16 luminance cells + 1 bias
        rng = np.random.default_rng([seed, 0xE0BED])
        self._map = torch.from_numpy(
            rng.standard_normal((dim, 23)).astype(np.float32) / np.sqrt(23.0)
        )

    def embed_text(self, text: str) -> np.ndarray:
        tokens = _require_text(text)
        acc = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            digest = hashlib.sha256(tok.encode("utf-8")).digest()
            tok_rng = np.random.default_rng(np.frombuffer(digest, dtype=np.uint64))
            acc += tok_rng.standard_normal(self.dim)
        norm = np.linalg.norm(acc)
        if norm < 1e-12:
            raise InvalidInputError(f"degenerate text embedding for {text!r}")
        return (acc / norm).astype(np.float32)

    def embed_image_tensor(self, image: torch.Tensor) -> torch.Tensor:
        if image.ndim != 3 or image.shape[2] != 3:
            raise InvalidInputError(f"expected (H, W, 3) image, got {tuple(image.shape)}")
        flat = image.reshape(-1, 3)
        means = flat.mean(dim=0)
        variances = flat.var(dim=0, unbiased=False)
        luma = (
            _LUMA[0] * image[:, :, 0]
            + _LUMA[1] * image[:, :, 1]
            + _LUMA[2] * image[:, :, 2]
        )
        grid = F.adaptive_avg_pool2d(luma[None, None], (4, 4)).reshape(16)
        one = torch.ones(1, dtype=image.dtype, device=image.device)
        features = torch.cat([means, variances, grid, one])
        vec = self._map.to(image.dtype) @ features
        return vec / torch.linalg.vector_norm(vec)

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        tensor = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
        with torch.no_grad():
            return self.embed_image_tensor(tensor).numpy()


class ModuleEmbedderAdapter:
    """Loads a user-supplied embedder from an importable module.

    The module must expose ``build_embedder()`` returning an object that
    satisfies the Embedder protocol (a wrapper around a remote-sensing
    pretrained vision-language model, say). Failure to import or build is
    surfaced immediately; there is no silent fallback to the mock.
    """

    def __init__(self, module_name: str):
        try:
            module = importlib.import_module(module_name)
        except ImportError as exc:
            raise EmbedderUnavailableError(
                f"embedder module {module_name!r} not importable: {exc}"
            ) from exc
        builder = getattr(module, "build_embedder", None)
        if builder is None:
            raise EmbedderUnavailableError(
                f"module {module_name!r} lacks build_embedder()"
            )
        inner = builder()
        for attr in ("embed_text", "embed_image", "embed_image_tensor", "dim"):
            if not hasattr(inner, attr):
                raise EmbedderUnavailableError(
                    f"embedder from {module_name!r} lacks {attr}"
                )
        self._inner = inner
        self.dim = inner.dim

    def embed_text(self, text: str) -> np.ndarray:
        return self._inner.embed_text(text)

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        return self._inner.embed_image(image)

    def embed_image_tensor(self, image: torch.Tensor) -> torch.Tensor:
        return self._inner.embed_image_tensor(image)


def get_embedder(name: str = "mock", dim: int = DEFAULT_DIM) -> Embedder:
    """Resolve an embedder by name.

    "mock" builds the deterministic test double. Any other name is treated
    as a module path for the adapter; the SINEDIT_EMBEDDER environment
    variable supplies a default module when name is "env".
    """
    if name == "mock":
        return MockEmbedder(dim=dim)
    if name == "env":
        module = os.environ.get("SINEDIT_EMBEDDER", "")
        if not module:
            raise EmbedderUnavailableError("SINEDIT_EMBEDDER is not set")
        return ModuleEmbedderAdapter(module)
    return ModuleEmbedderAdapter(name)
