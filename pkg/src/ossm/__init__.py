"""Toy-scale MoE transformer inference stack.

Dense kernels, an MXFP4 weight codec, grouped-query attention with sink
biases and banded/dense masking, top-k expert routing, checkpoint I/O
with closed-form parameter accounting, a role/channel chat protocol, and
a deterministic decoding engine with stub tools.
"""

from . import attention, engine, harmony, model, moe, mxfp4, tensor
from .checkpoint import (
    CheckpointError,
    ChecksumError,
    MalformedHeaderError,
    TruncatedPayloadError,
    load_checkpoint,
    save_checkpoint,
)
from .model import (
    ModelConfig,
    ParamReport,
    TransformerModel,
    count_parameters,
    estimate_checkpoint_size,
    init_random,
    preset_config,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ChecksumError",
    "MalformedHeaderError",
    "ModelConfig",
    "ParamReport",
    "TransformerModel",
    "TruncatedPayloadError",
    "attention",
    "count_parameters",
    "engine",
    "estimate_checkpoint_size",
    "harmony",
    "init_random",
    "load_checkpoint",
    "model",
    "moe",
    "mxfp4",
    "preset_config",
    "save_checkpoint",
    "tensor",
]
