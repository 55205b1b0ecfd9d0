"""Parameter-efficient 2D-to-3D promptable tumor segmentation toolkit."""

__version__ = "0.1.0"

from .volume import MaskVolume, ModelInput, Volume, clip_normalize, inject_organ_channel, resample
from .phantom import PhantomSpec, synth_phantom
from .sampling import AugmentPolicy, PatchSpec, augment, sample_patch
from .text import HashingTextEncoder, PromptBank, TextEmbeddingPair, build_text_embeddings
from .points import PointPrompt, SelectionStrategy
from .losses import LossConfig
from .metrics import dice, icc, nsd
from .pipeline import TrainConfig, infer, load_checkpoint, save_checkpoint, train

__all__ = [
    "Volume",
    "MaskVolume",
    "ModelInput",
    "resample",
    "clip_normalize",
    "inject_organ_channel",
    "PhantomSpec",
    "synth_phantom",
    "AugmentPolicy",
    "PatchSpec",
    "augment",
    "sample_patch",
    "PromptBank",
    "TextEmbeddingPair",
    "HashingTextEncoder",
    "build_text_embeddings",
    "PointPrompt",
    "SelectionStrategy",
    "LossConfig",
    "dice",
    "nsd",
    "icc",
    "TrainConfig",
    "train",
    "infer",
    "save_checkpoint",
    "load_checkpoint",
]
