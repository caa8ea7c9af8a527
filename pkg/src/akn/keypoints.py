"""Heatmap head: squeeze-excitation channel weighting, heatmap generation,
attention reweighting for the auxiliary classifier, and the energy regularizer
that pushes heatmap scores toward binary."""

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .tensor import Tensor, parameter


def _batched(x, want_ndim):
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    if x.ndim == want_ndim - 1:
        return ops.reshape(x, (1,) + x.shape), True
    if x.ndim != want_ndim:
        raise ShapeError(f"expected {want_ndim}-d or {want_ndim - 1}-d input, got {x.ndim}-d")
    return x, False


def channel_squeeze(x):
    """(B, C, T, H, W) or (C, T, H, W) -> per-frame channel means (B, T, C) / (T, C)."""
    x, squeeze = _batched(x, 5)
    z = ops.mean(x, axis=(3, 4))              # (B, C, T)
    z = ops.transpose(z, (0, 2, 1))           # (B, T, C)
    return ops.reshape(z, z.shape[1:]) if squeeze else z


def channel_weights(z, w1, w2, r=None):
    """Softmax(w2 @ relu(w1 @ z)) per frame; z (..., C) -> simplex weights (..., C)."""
    z = z if isinstance(z, Tensor) else Tensor(np.asarray(z))
    c = z.shape[-1]
    if w1.shape[1] != c or w2.shape != (c, w1.shape[0]):
        raise ShapeError(
            f"weight shapes {w1.shape} and {w2.shape} do not match {c} channels")
    if r is not None:
        if c % r != 0:
            raise ConfigError(f"reduction ratio {r} does not divide {c} channels")
        if w1.shape[0] != c // r:
            raise ShapeError(f"hidden width {w1.shape[0]} != C/r = {c // r}")
    hidden = ops.relu(ops.dense(z, w1))
    return ops.softmax(ops.dense(hidden, w2), axis=-1)


@dataclass
class Heatmap:
    """Raw channel-weighted scores and their clip-global min-max normalization."""
    raw: Tensor        # (B, T, H, W) or (T, H, W)
    norm: Tensor       # same shape, values in [0, 1]
    lo: np.ndarray     # per-clip min of raw
    hi: np.ndarray     # per-clip max of raw


def heatmap(x, omega) -> Heatmap:
    """Per-position channel inner product, then per-clip min-max to [0, 1].

    x: (B, C, T, H, W) features; omega: (B, T, C) per-frame channel weights.
    A clip whose raw scores are all equal normalizes to the constant 0.5.
    """
    x, squeeze = _batched(x, 5)
    omega, _ = _batched(omega, 3)
    if not np.isfinite(x.data).all():
        raise ValueError("heatmap input features contain non-finite values")
    b, c, t, h, w = x.shape
    if omega.shape != (b, t, c):
        raise ShapeError(f"channel weights shape {omega.shape} != ({b}, {t}, {c})")
    xt = ops.transpose(x, (0, 2, 1, 3, 4))                    # (B, T, C, H, W)
    wexp = ops.reshape(omega, (b, t, c, 1, 1))
    raw = ops.tensor_sum(ops.mul(xt, wexp), axis=2)           # (B, T, H, W)

    flat = ops.reshape(raw, (b, t * h * w))
    mn = ops.reduce_min(flat, axis=1, keepdims=True)
    mx = ops.reduce_max(flat, axis=1, keepdims=True)
    lo = mn.data.reshape(b).copy()
    hi = mx.data.reshape(b).copy()
    degenerate = (hi == lo).astype(raw.dtype).reshape(b, 1, 1, 1)
    mn4 = ops.reshape(mn, (b, 1, 1, 1))
    span = ops.sub(ops.reshape(mx, (b, 1, 1, 1)), mn4)
    # degenerate clips: numerator 0, denominator 1, then shifted to 0.5
    norm = ops.add(ops.div(ops.sub(raw, mn4), ops.add(span, Tensor(degenerate))),
                   Tensor(0.5 * degenerate))
    if squeeze:
        raw = ops.reshape(raw, raw.shape[1:])
        norm = ops.reshape(norm, norm.shape[1:])
        lo, hi = lo[0], hi[0]
    return Heatmap(raw=raw, norm=norm, lo=lo, hi=hi)


def attention_reweight(x, hm):
    """Multiply every channel of (B, C, T, H, W) by the normalized heatmap."""
    scores = hm.norm if isinstance(hm, Heatmap) else hm
    x, squeeze = _batched(x, 5)
    scores, _ = _batched(scores, 4)
    b, c, t, h, w = x.shape
    if scores.shape != (b, t, h, w):
        raise ShapeError(f"heatmap shape {scores.shape} != ({b}, {t}, {h}, {w})")
    out = ops.mul(x, ops.reshape(scores, (b, 1, t, h, w)))
    return ops.reshape(out, out.shape[1:]) if squeeze else out


def energy_reg(hm):
    """Mean over every position (and clip) of 4*H*(1-H); 0 iff binary, 1 at 0.5."""
    scores = hm.norm if isinstance(hm, Heatmap) else hm
    scores = scores if isinstance(scores, Tensor) else Tensor(np.asarray(scores))
    return ops.mean(ops.mul(ops.mul(scores, ops.sub(1.0, scores)), 4.0))


class KeypointHead:
    """Owns the squeeze-excitation weights and the auxiliary classifier."""

    def __init__(self, channels: int, classes: int, r: int = 4, rng=None,
                 dtype=np.float32, name: str = "kp"):
        if r < 1 or channels % r != 0:
            raise ConfigError(f"reduction ratio {r} must divide channel count {channels}")
        if rng is None:
            rng = np.random.default_rng(0)
        hidden = channels // r
        self.channels = channels
        self.classes = classes
        self.r = r
        self.name = name
        self.w1 = parameter(rng.standard_normal((hidden, channels)) * np.sqrt(2.0 / channels),
                            f"{name}.w1", dtype)
        self.w2 = parameter(rng.standard_normal((channels, hidden)) * np.sqrt(2.0 / hidden),
                            f"{name}.w2", dtype)
        self.aux_w1 = parameter(rng.standard_normal((channels, channels, 3, 3))
                                * np.sqrt(2.0 / (channels * 9)), "aux.conv1.w", dtype)
        self.aux_w2 = parameter(rng.standard_normal((channels, channels, 3, 3))
                                * np.sqrt(2.0 / (channels * 9)), "aux.conv2.w", dtype)
        # zero like the fusion fc: auxiliary logits start uniform
        self.aux_fc_w = parameter(np.zeros((classes, channels)), "aux.fc.w", dtype)
        self.aux_fc_b = parameter(np.zeros(classes), "aux.fc.b", dtype)

    def params(self):
        return {
            f"{self.name}.w1": self.w1,
            f"{self.name}.w2": self.w2,
            "aux.conv1.w": self.aux_w1,
            "aux.conv2.w": self.aux_w2,
            "aux.fc.w": self.aux_fc_w,
            "aux.fc.b": self.aux_fc_b,
        }

    def weights(self, x):
        """x (B, C, T, H, W) -> per-frame channel simplex (B, T, C)."""
        return channel_weights(channel_squeeze(x), self.w1, self.w2, self.r)

    def heatmap(self, x) -> Heatmap:
        return heatmap(x, self.weights(x))

    def aux_predict(self, x_tilde):
        """Reweighted features (B, C, T, H, W) -> auxiliary logits (B, K)."""
        x, squeeze = _batched(x_tilde, 5)
        b, c, t, h, w = x.shape
        if c != self.channels:
            raise ShapeError(f"aux head expects {self.channels} channels, got {c}")
        y = ops.reshape(ops.transpose(x, (0, 2, 1, 3, 4)), (b * t, c, h, w))
        y = ops.relu(ops.conv2d(y, self.aux_w1, stride=2, padding=1))
        y = ops.relu(ops.conv2d(y, self.aux_w2, stride=2, padding=1))
        ho, wo = y.shape[-2], y.shape[-1]
        y = ops.reshape(y, (b, t, c, ho, wo))
        pooled = ops.mean(y, axis=(1, 3, 4))                  # (B, C)
        logits = ops.dense(pooled, self.aux_fc_w, self.aux_fc_b)
        return ops.reshape(logits, (self.classes,)) if squeeze else logits
