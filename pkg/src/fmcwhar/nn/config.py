"""Declarative network configuration and the built-in presets.

The stage table drives everything: the backbone construction, the shape
audit, and the static parameter/FLOP counting. Presets:

- ``b0``: the full-scale backbone stage table with canonical per-stage
  repeats (1, 2, 2, 3, 3, 4, 1) and 224 x 224 three-channel input, so
  the single-branch parameter audit is meaningful.
- ``table1_literal``: same stage table, one block per stage.
- ``toy``: channels capped at 8 and 32 x 32 single-channel input for
  desk-scale training and gradient checks.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .heads import FEATURE_RULES


@dataclass(frozen=True)
class StageSpec:
    out_channels: int
    kernel: int
    expand_ratio: int
    stride: int
    repeats: int = 1


# Backbone stage table shared by the full-scale presets.
_FULL_STAGES_BASE = (
    (16, 3, 1, 1),
    (24, 3, 6, 2),
    (40, 5, 6, 2),
    (80, 3, 6, 2),
    (112, 5, 6, 1),
    (192, 5, 6, 2),
    (320, 3, 6, 1),
)
_B0_REPEATS = (1, 2, 2, 3, 3, 4, 1)


@dataclass(frozen=True)
class ModelConfig:
    stages: tuple[StageSpec, ...]
    stem_channels: int = 32
    head_channels: int = 1280
    in_channels: int = 3
    input_hw: int = 224
    cbam_reduction: int = 16
    lstm_hidden: int = 128
    rd_linear_out: int = 128
    fused_dim: int = 384
    num_classes: int = 6
    dropout_p: float = 0.2
    lstm_feature_dim_rule: str = "hxc"
    attention: str = "cbam"
    include_classifier: bool = False
    name: str = "custom"

    def __post_init__(self):
        if self.lstm_feature_dim_rule not in FEATURE_RULES:
            raise ValueError(
                f"lstm_feature_dim_rule must be one of {FEATURE_RULES}, "
                f"got {self.lstm_feature_dim_rule!r}"
            )
        if self.rd_linear_out != self.lstm_hidden:
            raise ValueError("rd head width must match the LSTM hidden size")
        if self.fused_dim != 3 * self.lstm_hidden:
            raise ValueError(
                f"fused_dim must be 3 x branch width "
                f"({3 * self.lstm_hidden}), got {self.fused_dim}"
            )
        object.__setattr__(self, "stages", tuple(self.stages))

    @property
    def feature_hw(self) -> int:
        """Spatial size after the stem and all stage strides."""
        hw = (self.input_hw + 1) // 2
        for stage in self.stages:
            hw = (hw + stage.stride - 1) // stage.stride
        return hw

    def lstm_feature_dim(self) -> int:
        if self.lstm_feature_dim_rule == "hxc":
            return self.head_channels * self.feature_hw
        return self.head_channels

    def rd_feature_dim(self) -> int:
        # The linear+max head always consumes the h-major flattening.
        return self.head_channels * self.feature_hw

    def to_json(self) -> str:
        payload = asdict(self)
        payload["stages"] = [asdict(s) for s in self.stages]
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        payload = json.loads(text)
        payload["stages"] = tuple(StageSpec(**s) for s in payload["stages"])
        return cls(**payload)


def _full_stages(repeats) -> tuple[StageSpec, ...]:
    return tuple(
        StageSpec(c, k, e, s, r)
        for (c, k, e, s), r in zip(_FULL_STAGES_BASE, repeats)
    )


PRESETS = {}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[name]
    if overrides:
        cfg = ModelConfig(**{**asdict(cfg), "stages": cfg.stages, **overrides})
    return cfg


PRESETS["b0"] = ModelConfig(stages=_full_stages(_B0_REPEATS), name="b0")
PRESETS["table1_literal"] = ModelConfig(
    stages=_full_stages((1,) * 7), name="table1_literal"
)
PRESETS["toy"] = ModelConfig(
    stages=(
        StageSpec(4, 3, 1, 1),
        StageSpec(4, 3, 2, 2),
        StageSpec(8, 5, 2, 2),
        StageSpec(8, 3, 2, 2),
        StageSpec(8, 5, 2, 1),
        StageSpec(8, 5, 2, 2),
        StageSpec(8, 3, 2, 1),
    ),
    stem_channels=4,
    head_channels=16,
    in_channels=1,
    input_hw=32,
    lstm_hidden=16,
    rd_linear_out=16,
    fused_dim=48,
    name="toy",
)
