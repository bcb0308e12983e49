"""Prompt-conditioned source separation (TUSS / FasTUSS) inference, cost model and streaming."""

from .config import ModelConfig, load_config, preset
from .cost import CostReport, calibrate, compute_breakdown, css_cost, model_cost
from .css import chunk_plan, css_separate
from .kernels import ConfigError
from .masks import AttentionMask, MaskVariant, build_mask, is_stream_realizable, validate_mask
from .model import PromptId, WeightBundle, init_weights, separate
from .streaming import offline_causal_forward, stream_init, stream_step

__all__ = [
    "AttentionMask",
    "ConfigError",
    "CostReport",
    "MaskVariant",
    "ModelConfig",
    "PromptId",
    "WeightBundle",
    "build_mask",
    "calibrate",
    "chunk_plan",
    "compute_breakdown",
    "css_cost",
    "css_separate",
    "init_weights",
    "is_stream_realizable",
    "load_config",
    "model_cost",
    "offline_causal_forward",
    "preset",
    "separate",
    "stream_init",
    "stream_step",
    "validate_mask",
]
