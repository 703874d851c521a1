"""Desk-scale paired-video editing pipeline.

Synthesizes paired two-embodiment clips procedurally, trains a
condition-masked transformer with flow matching (LoRA finetuning on a
from-scratch numpy autodiff engine), and evaluates edits with
PSNR/SSIM/MSE. See the CLI (`robovid --help`) for the operator surface.
"""

from .codec import PatchSpec, TokenGrid, decode, encode, positional_embedding
from .datagen import DatasetConfig, generate_dataset, read_manifest
from .flow import (FlowSample, SamplerConfig, TrainConfig, fm_loss,
                   make_sample, sample_edit, train)
from .kinematics import AnimationClip, Skeleton, bake, canonical_skeleton, retarget
from .lora import LoraAdapter, attach, merge, unmerge
from .metrics import EvalReport, evaluate_dataset, mse_255, psnr, ssim
from .model import DiT, DiTConfig, build_mask, forward, init_parameters
from .optim import OptimizerState, adamw_step
from .rng import DEFAULT_SEED, substream
from .scene import Embodiment, SceneSpec, human_embodiment, humanoid_embodiment, render_pair
from .tensor import Tensor
from .video import VideoClip, read_clip, write_clip

__version__ = "0.1.0"

__all__ = [
    "AnimationClip", "DatasetConfig", "DEFAULT_SEED", "DiT", "DiTConfig",
    "Embodiment", "EvalReport", "FlowSample", "LoraAdapter", "OptimizerState",
    "PatchSpec", "SamplerConfig", "SceneSpec", "Skeleton", "Tensor",
    "TokenGrid", "TrainConfig", "VideoClip", "adamw_step", "attach", "bake",
    "build_mask", "canonical_skeleton", "decode", "encode", "evaluate_dataset",
    "fm_loss", "forward", "generate_dataset", "human_embodiment",
    "humanoid_embodiment", "init_parameters", "make_sample", "merge",
    "mse_255", "positional_embedding", "psnr", "read_clip", "read_manifest",
    "render_pair", "retarget", "sample_edit", "ssim", "substream", "train",
    "unmerge", "write_clip",
]
