"""Static parameter and FLOP accounting from a ModelConfig.

Counts come from walking the architecture description, never from
instantiating arrays, so they are cheap and deterministic. FLOPs follow
the multiply-accumulate convention (one MAC = one FLOP) used by the
common profilers, counting convolutions, linear maps, attention MLPs
and LSTM matrix products; normalization and elementwise ops are free.

Trainable parameters are weights plus batch-norm affine terms; the
batch-norm running statistics are reported separately as non-trainable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .config import ModelConfig

# Audit targets: published totals for the full-scale three-branch network
# (params / MAC-FLOPs) and the trainable count of one stock single-branch
# backbone with SE attention and its 1000-class classifier.
REFERENCE_TOTAL_PARAMS = 23_420_000
REFERENCE_TOTAL_FLOPS = 1_324_820_000
REFERENCE_SE_BASELINE_TRAINABLE = 5_290_000


@dataclass
class CountReport:
    per_module: dict[str, int] = field(default_factory=dict)
    total: int = 0
    non_trainable: int = 0

    def add(self, module: str, count: int) -> None:
        self.per_module[module] = self.per_module.get(module, 0) + count
        self.total += count


def _bn_params(channels: int) -> tuple[int, int]:
    return 2 * channels, 2 * channels  # (gamma+beta, running mean+var)


def _attention_params(cfg: ModelConfig, block_in: int, expanded: int) -> int:
    if cfg.attention == "cbam":
        hidden = max(1, math.ceil(expanded / cfg.cbam_reduction))
        mlp = expanded * hidden + hidden * expanded
        spatial = 7 * 7 * 2 * 1 + 1
        return mlp + spatial
    if cfg.attention == "se":
        squeeze = max(1, block_in // 4)
        return expanded * squeeze + squeeze + squeeze * expanded + expanded
    return 0


def _mbconv_params(cfg: ModelConfig, block_in: int, block_out: int,
                   kernel: int, expand: int) -> tuple[int, int]:
    expanded = block_in * expand
    trainable = 0
    running = 0
    if expand != 1:
        trainable += block_in * expanded
        t, r = _bn_params(expanded)
        trainable, running = trainable + t, running + r
    trainable += expanded * kernel * kernel
    t, r = _bn_params(expanded)
    trainable, running = trainable + t, running + r
    trainable += _attention_params(cfg, block_in, expanded)
    trainable += expanded * block_out
    t, r = _bn_params(block_out)
    return trainable + t, running + r


def count_backbone_params(cfg: ModelConfig) -> CountReport:
    report = CountReport()
    trainable = cfg.in_channels * cfg.stem_channels * 9
    t, r = _bn_params(cfg.stem_channels)
    report.add("stem", trainable + t)
    report.non_trainable += r

    channels = cfg.stem_channels
    for idx, stage in enumerate(cfg.stages, start=1):
        for rep in range(stage.repeats):
            block_in = channels if rep == 0 else stage.out_channels
            t, r = _mbconv_params(cfg, block_in, stage.out_channels,
                                  stage.kernel, stage.expand_ratio)
            report.add(f"stage{idx}", t)
            report.non_trainable += r
        channels = stage.out_channels

    t, r = _bn_params(cfg.head_channels)
    report.add("head_conv", channels * cfg.head_channels + t)
    report.non_trainable += r

    if cfg.include_classifier:
        report.add("classifier", cfg.head_channels * 1000 + 1000)
    return report


def _lstm_params(input_dim: int, hidden: int) -> int:
    return 4 * (input_dim * hidden + hidden * hidden + hidden)


def count_params(cfg: ModelConfig) -> CountReport:
    """Per-module trainable parameter counts for the three-branch network."""
    report = CountReport()
    backbone = count_backbone_params(cfg)
    for branch in ("rt", "dt", "rd"):
        report.add(f"{branch}.backbone", backbone.total)
        report.non_trainable += backbone.non_trainable
    for branch in ("rt", "dt"):
        report.add(f"{branch}.lstm", _lstm_params(cfg.lstm_feature_dim(), cfg.lstm_hidden))
    report.add("rd.head", cfg.rd_feature_dim() * cfg.rd_linear_out + cfg.rd_linear_out)
    report.add("fusion", cfg.fused_dim * cfg.num_classes + cfg.num_classes)
    return report


def _conv_macs(k: int, c_in: int, c_out: int, h_out: int, w_out: int) -> int:
    return k * k * c_in * c_out * h_out * w_out


def count_backbone_flops(cfg: ModelConfig) -> CountReport:
    report = CountReport()
    hw = (cfg.input_hw + 1) // 2
    report.add("stem", _conv_macs(3, cfg.in_channels, cfg.stem_channels, hw, hw))

    channels = cfg.stem_channels
    for idx, stage in enumerate(cfg.stages, start=1):
        for rep in range(stage.repeats):
            block_in = channels if rep == 0 else stage.out_channels
            stride = stage.stride if rep == 0 else 1
            expanded = block_in * stage.expand_ratio
            macs = 0
            if stage.expand_ratio != 1:
                macs += _conv_macs(1, block_in, expanded, hw, hw)
            hw_out = (hw + stride - 1) // stride
            macs += stage.kernel * stage.kernel * expanded * hw_out * hw_out
            if cfg.attention == "cbam":
                hidden = max(1, math.ceil(expanded / cfg.cbam_reduction))
                macs += 2 * (expanded * hidden + hidden * expanded)
                macs += _conv_macs(7, 2, 1, hw_out, hw_out)
            elif cfg.attention == "se":
                squeeze = max(1, block_in // 4)
                macs += expanded * squeeze + squeeze * expanded
            macs += _conv_macs(1, expanded, stage.out_channels, hw_out, hw_out)
            report.add(f"stage{idx}", macs)
            hw = hw_out
        channels = stage.out_channels

    report.add("head_conv", _conv_macs(1, channels, cfg.head_channels, hw, hw))
    if cfg.include_classifier:
        report.add("classifier", cfg.head_channels * 1000)
    return report


def count_flops(cfg: ModelConfig) -> CountReport:
    """Multiply-accumulate count for one forward pass of the full network."""
    report = CountReport()
    backbone = count_backbone_flops(cfg)
    for branch in ("rt", "dt", "rd"):
        report.add(f"{branch}.backbone", backbone.total)
    steps = cfg.feature_hw
    hidden = cfg.lstm_hidden
    for branch in ("rt", "dt"):
        d = cfg.lstm_feature_dim()
        report.add(f"{branch}.lstm", steps * 4 * (d * hidden + hidden * hidden))
    report.add("rd.head", steps * cfg.rd_feature_dim() * cfg.rd_linear_out)
    report.add("fusion", cfg.fused_dim * cfg.num_classes)
    return report
