"""Finite-difference verification of every backward pass.

Each case builds a small layer with seeded weights, defines the scalar
loss sum(output * R) for a fixed random projection R, and compares the
analytic gradients (input and every parameter) against central
differences with step 1e-6 in float64. The error metric is

    |analytic - numeric| / max(|analytic|, |numeric|, 1e-3)

elementwise: true relative error wherever gradients are of sensible
magnitude, absolute against 1e-3 below that, which keeps the check
meaningful where finite-difference noise would swamp a tiny ratio.
Inputs are nudged away from activation kinks so the differences are
two-sided smooth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import Cbam, ChannelAttention, SpatialAttention
from .blocks import MBConv
from .heads import FusionClassifier, RdHead, SequenceReshape
from .layers import (
    BatchNorm2d,
    Conv2d,
    DepthwiseConv2d,
    Linear,
    ReLU,
    Swish,
)
from .recurrent import Lstm

DEFAULT_EPS = 1e-6
DEFAULT_TOLERANCE = 1e-4


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    max_rel_error: float
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
    return float(np.max(np.abs(analytic - numeric) / denom))


def numerical_grad(f, x: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Central differences of a scalar function, elementwise over x."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = f()
        flat[i] = orig - eps
        f_minus = f()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def _away_from_kinks(rng, shape, margin=0.2):
    x = rng.standard_normal(shape)
    return x + margin * np.sign(x)


def check_layer(name, layer, x, forward=None, eps=DEFAULT_EPS) -> GradCheckResult:
    """Compare analytic input/parameter gradients against central differences."""
    fwd = forward if forward is not None else (
        lambda: layer.forward(x, train=False))
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    out = fwd()
    projection = rng.standard_normal(out.shape)

    def loss():
        return float(np.sum(fwd() * projection))

    layer.zero_grads()
    out = fwd()
    dx = layer.backward(projection)

    errors = [max_rel_error(dx, numerical_grad(loss, x, eps))]
    analytic_grads = {k: v.copy() for k, v in layer.grads().items()}
    for pname, pvalue in layer.params().items():
        errors.append(max_rel_error(analytic_grads[pname], numerical_grad(loss, pvalue, eps)))
    return GradCheckResult(name=name, max_rel_error=max(errors))


def _case_conv(rng):
    layer = Conv2d(3, 4, 3, stride=2, bias=True, rng=rng)
    return layer, _away_from_kinks(rng, (2, 3, 8, 8))


def _case_depthwise(rng):
    layer = DepthwiseConv2d(4, 3, stride=1, rng=rng)
    return layer, _away_from_kinks(rng, (2, 4, 6, 6))


def _case_batchnorm(rng):
    layer = BatchNorm2d(5)
    layer.running_mean = rng.standard_normal(5) * 0.3
    layer.running_var = rng.uniform(0.5, 1.5, 5)
    layer.gamma[...] = rng.uniform(0.5, 1.5, 5)
    layer.beta[...] = rng.standard_normal(5) * 0.2
    return layer, _away_from_kinks(rng, (2, 5, 4, 4))


def _case_batchnorm_train(rng):
    layer = BatchNorm2d(3)
    layer.gamma[...] = rng.uniform(0.5, 1.5, 3)
    x = _away_from_kinks(rng, (3, 3, 4, 4))
    return layer, x, (lambda: layer.forward(x, train=True))


def _case_relu(rng):
    return ReLU(), _away_from_kinks(rng, (2, 3, 5, 5))


def _case_swish(rng):
    return Swish(), rng.standard_normal((2, 3, 5, 5))


def _case_linear(rng):
    return Linear(7, 4, rng=rng), rng.standard_normal((3, 7))


def _case_cbam_channel(rng):
    return ChannelAttention(8, reduction=4, rng=rng), _away_from_kinks(rng, (2, 8, 5, 5))


def _case_cbam_spatial(rng):
    return SpatialAttention(rng=rng), _away_from_kinks(rng, (2, 4, 8, 8))


def _case_cbam(rng):
    return Cbam(6, reduction=3, rng=rng), _away_from_kinks(rng, (2, 6, 7, 7))


def _case_mbconv(rng):
    layer = MBConv(4, 4, 3, expand_ratio=2, stride=1, cbam_reduction=4, rng=rng)
    x = _away_from_kinks(rng, (1, 4, 8, 8))
    _set_bn_eval_stats(layer, rng)
    return layer, x


def _case_mbconv_stride2(rng):
    layer = MBConv(3, 5, 5, expand_ratio=2, stride=2, cbam_reduction=4, rng=rng)
    x = _away_from_kinks(rng, (2, 3, 8, 8))
    _set_bn_eval_stats(layer, rng)
    return layer, x


def _set_bn_eval_stats(layer, rng):
    for name, child in layer._children:
        if isinstance(child, BatchNorm2d):
            child.running_mean = rng.standard_normal(child.channels) * 0.1
            child.running_var = rng.uniform(0.8, 1.2, child.channels)
        else:
            _set_bn_eval_stats(child, rng)


def _case_lstm(rng):
    return Lstm(6, 5, rng=rng), rng.standard_normal((2, 5, 6))


def _case_sequence_reshape(rng):
    return SequenceReshape("hxc"), rng.standard_normal((2, 3, 4, 5))


def _case_sequence_reshape_pooled(rng):
    return SequenceReshape("c"), rng.standard_normal((2, 3, 4, 5))


def _case_rd_head(rng):
    return RdHead(6, 4, rng=rng), rng.standard_normal((2, 5, 6))


def _case_fusion(rng):
    layer = FusionClassifier(5, 6, dropout_p=0.2, rng=rng)
    x = rng.standard_normal((2, 15))

    def fwd():
        return layer.forward(x[:, :5], x[:, 5:10], x[:, 10:], train=False)

    class _Adapter:
        def zero_grads(self):
            layer.zero_grads()

        def params(self):
            return layer.params()

        def grads(self):
            return layer.grads()

        def backward(self, dout):
            d_rt, d_dt, d_rd = layer.backward(dout)
            return np.concatenate([d_rt, d_dt, d_rd], axis=1)

    return _Adapter(), x, fwd


def _case_cross_entropy(rng):
    from ..training import cross_entropy

    logits = rng.standard_normal((4, 6))
    labels = rng.integers(0, 6, size=4)

    class _Adapter:
        def zero_grads(self):
            pass

        def params(self):
            return {}

        def grads(self):
            return {}

        def backward(self, dout):
            _, grad = cross_entropy(logits, labels)
            return grad * dout  # dout is the scalar projection weight

    def fwd():
        loss, _ = cross_entropy(logits, labels)
        return np.array([loss])

    return _Adapter(), logits, fwd


CASES = {
    "conv": _case_conv,
    "depthwise": _case_depthwise,
    "batchnorm": _case_batchnorm,
    "batchnorm_train": _case_batchnorm_train,
    "relu": _case_relu,
    "swish": _case_swish,
    "linear": _case_linear,
    "cbam_channel": _case_cbam_channel,
    "cbam_spatial": _case_cbam_spatial,
    "cbam": _case_cbam,
    "mbconv": _case_mbconv,
    "mbconv_stride2": _case_mbconv_stride2,
    "lstm": _case_lstm,
    "sequence_reshape": _case_sequence_reshape,
    "sequence_reshape_pooled": _case_sequence_reshape_pooled,
    "rd_head": _case_rd_head,
    "fusion": _case_fusion,
    "cross_entropy": _case_cross_entropy,
}

MODULE_GROUPS = {
    "all": list(CASES),
    "conv": ["conv", "depthwise"],
    "bn": ["batchnorm", "batchnorm_train"],
    "activations": ["relu", "swish"],
    "cbam": ["cbam_channel", "cbam_spatial", "cbam"],
    "mbconv": ["mbconv", "mbconv_stride2"],
    "lstm": ["lstm"],
    "heads": ["sequence_reshape", "sequence_reshape_pooled", "rd_head", "fusion"],
    "loss": ["cross_entropy"],
}


def run_gradcheck(module: str = "all", seed: int = 7) -> list[GradCheckResult]:
    """Run the finite-difference suite for one module group (or everything)."""
    if module in MODULE_GROUPS:
        names = MODULE_GROUPS[module]
    elif module in CASES:
        names = [module]
    else:
        raise KeyError(
            f"unknown gradcheck module {module!r}; "
            f"choose from {sorted(set(MODULE_GROUPS) | set(CASES))}"
        )
    results = []
    for name in names:
        built = CASES[name](np.random.default_rng(seed))
        results.append(check_layer(name, *built))
    return results
