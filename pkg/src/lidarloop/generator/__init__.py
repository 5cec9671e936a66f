"""Latent-diffusion frame generator and the deterministic baseline."""

from lidarloop.generator.checkpoint import load_model, save_model
from lidarloop.generator.context import GeneratorContext, build_context
from lidarloop.generator.networks import (
    CrossBoxAttention,
    Denoiser,
    FiLMLayer,
    LatentAE,
)
from lidarloop.generator.pipeline import (
    DiffusionGenerator,
    Generator,
    GeneratorConfig,
    GeneratorModel,
    SdeBaselineGenerator,
    image_to_tensor,
    merge_range_images,
    tensor_to_image,
)
from lidarloop.generator.schedule import (
    DiffusionSchedule,
    NMConfig,
    forward_noise,
    noise_modulate,
)
from lidarloop.generator.train import (
    TrainItem,
    contexts_from_frames,
    prepare_items,
    train_autoencoder,
    train_diffusion,
    train_step,
)

__all__ = [
    "GeneratorContext",
    "build_context",
    "GeneratorConfig",
    "GeneratorModel",
    "Generator",
    "DiffusionGenerator",
    "SdeBaselineGenerator",
    "merge_range_images",
    "image_to_tensor",
    "tensor_to_image",
    "DiffusionSchedule",
    "NMConfig",
    "forward_noise",
    "noise_modulate",
    "LatentAE",
    "Denoiser",
    "FiLMLayer",
    "CrossBoxAttention",
    "TrainItem",
    "contexts_from_frames",
    "prepare_items",
    "train_autoencoder",
    "train_diffusion",
    "train_step",
    "save_model",
    "load_model",
]
