"""From-scratch neural building blocks with exact analytic backward passes.

Layers run on float64 numpy arrays by default so finite-difference
gradient checks are meaningful; training at float32 works too. Forward
and backward are single-threaded by contract: each layer caches its
forward activations and consumes them in the matching backward call.
"""

from .config import ModelConfig, StageSpec
from .counting import count_flops, count_params
from .layers import (
    BatchNorm2d,
    Conv2d,
    DepthwiseConv2d,
    Dropout,
    Layer,
    Linear,
    ReLU,
    ShapeMismatch,
    Sigmoid,
    Swish,
)
from .attention import Cbam, ChannelAttention, SpatialAttention, SqueezeExcite
from .blocks import Backbone, MBConv
from .recurrent import Lstm
from .heads import FusionClassifier, RdHead, SequenceReshape
from .model import MultiDomainModel
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckResult, run_gradcheck

__all__ = [
    "Backbone", "BatchNorm2d", "Cbam", "ChannelAttention", "Conv2d",
    "DepthwiseConv2d", "Dropout", "FusionClassifier", "GradCheckResult",
    "Layer", "Linear", "Lstm", "MBConv", "ModelConfig", "MultiDomainModel",
    "RdHead", "ReLU", "SequenceReshape", "ShapeMismatch", "Sigmoid",
    "SpatialAttention", "SqueezeExcite", "StageSpec", "Swish",
    "count_flops", "count_params", "load_checkpoint", "run_gradcheck",
    "save_checkpoint",
]
