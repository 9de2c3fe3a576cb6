"""Single-image diffusion training and text/region guided editing."""

from .checkpoint import CheckpointData, load_checkpoint, save_checkpoint
from .denoiser import Denoiser, DenoiserConfig
from .editing import EditRequest, ModelBundle, Rect, reconstruct_source, run_edit, tile_edit
from .embedders import Embedder, MockEmbedder, get_embedder
from .errors import SineditError
from .guidance import GuidanceSpec, clip_loss, mask_pyramid, roi_content_update, text_guided_update
from .metrics import clip_score
from .prompts import PromptBundle, build_prompt_bundle, ensemble_embed, generate_variants
from .pyramid import ImagePyramid, build_pyramid
from .sampling import Sampler, sampler_from_trainer
from .schedule import DiffusionSchedule, forward_sample, make_schedule
from .training import TrainConfig, Trainer, train

__version__ = "0.1.0"

__all__ = [
    "CheckpointData",
    "Denoiser",
    "DenoiserConfig",
    "DiffusionSchedule",
    "EditRequest",
    "Embedder",
    "GuidanceSpec",
    "ImagePyramid",
    "MockEmbedder",
    "ModelBundle",
    "PromptBundle",
    "Rect",
    "Sampler",
    "SineditError",
    "TrainConfig",
    "Trainer",
    "build_prompt_bundle",
    "build_pyramid",
    "clip_loss",
    "clip_score",
    "ensemble_embed",
    "forward_sample",
    "generate_variants",
    "get_embedder",
    "load_checkpoint",
    "make_schedule",
    "mask_pyramid",
    "reconstruct_source",
    "roi_content_update",
    "run_edit",
    "sampler_from_trainer",
    "save_checkpoint",
    "text_guided_update",
    "tile_edit",
    "train",
]
