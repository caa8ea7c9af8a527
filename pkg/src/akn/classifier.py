"""Kernel compaction and the 1D point classifier.

compact_kernel collapses one spatial axis of a 2D conv weight; compact_network
rebuilds the back sub-network's residual blocks as 1D blocks over the ranked
point axis, initialized from the compacted 2D weights; fuse_predict combines
pooled front features with pooled point features for the final logits.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import ops
from .backbone import ResidualBlock
from .errors import ConfigError, ShapeError
from .tensor import Tensor, parameter

SUM_AXES = {"width": 3, "height": 2}


@dataclass
class CompactedKernel:
    source: np.ndarray   # (Cout, Cin, kh, kw)
    result: np.ndarray   # (Cout, Cin, k) after summing one spatial axis


def compact_kernel(w2d, sum_axis: str = "width") -> CompactedKernel:
    """Sum a (Cout, Cin, kh, kw) weight along one spatial axis."""
    if sum_axis not in SUM_AXES:
        raise ConfigError(f"sum_axis must be 'width' or 'height', got {sum_axis!r}")
    src = np.asarray(w2d.data if isinstance(w2d, Tensor) else w2d)
    if src.ndim != 4:
        raise ShapeError(f"2D conv weight must be 4-d, got {src.ndim}-d")
    return CompactedKernel(source=src, result=src.sum(axis=SUM_AXES[sum_axis]))


class PointBlock:
    """1D mirror of a ResidualBlock over the ranked point axis: conv k/s ->
    affine -> relu -> conv k/1 -> affine, 1x1/s projection shortcut, relu."""

    def __init__(self, name: str, w1: np.ndarray, aff1: tuple, w2: np.ndarray,
                 aff2: tuple, proj: np.ndarray, stride: int,
                 shift_fraction: float = 0.0, dtype=np.float32):
        self.name = name
        self.cin = w1.shape[1]
        self.cout = w1.shape[0]
        self.stride = stride
        self.shift_fraction = shift_fraction
        self.w1 = parameter(w1, f"{name}.conv1.w.1d", dtype)
        self.aff1_scale = parameter(aff1[0], f"{name}.aff1.scale.1d", dtype)
        self.aff1_offset = parameter(aff1[1], f"{name}.aff1.offset.1d", dtype)
        self.w2 = parameter(w2, f"{name}.conv2.w.1d", dtype)
        self.aff2_scale = parameter(aff2[0], f"{name}.aff2.scale.1d", dtype)
        self.aff2_offset = parameter(aff2[1], f"{name}.aff2.offset.1d", dtype)
        self.proj_w = parameter(proj, f"{name}.proj.w.1d", dtype)

    def params(self):
        return {
            f"{self.name}.conv1.w.1d": self.w1,
            f"{self.name}.aff1.scale.1d": self.aff1_scale,
            f"{self.name}.aff1.offset.1d": self.aff1_offset,
            f"{self.name}.conv2.w.1d": self.w2,
            f"{self.name}.aff2.scale.1d": self.aff2_scale,
            f"{self.name}.aff2.offset.1d": self.aff2_offset,
            f"{self.name}.proj.w.1d": self.proj_w,
        }

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3:
            raise ShapeError(f"point block {self.name} expects (B, C, N), got {x.ndim}-d")
        if x.shape[1] != self.cin:
            raise ShapeError(f"point block {self.name} expects {self.cin} channels, got {x.shape[1]}")
        branch = x
        if self.shift_fraction > 0:
            # ranked points play the role of the time axis here
            branch = ops.temporal_shift(branch, self.shift_fraction, time_axis=2, channel_axis=1)
        k = self.w1.shape[2]
        y = ops.conv1d(branch, self.w1, stride=self.stride, padding=k // 2)
        y = ops.channel_affine(y, self.aff1_scale, self.aff1_offset, axis=1)
        y = ops.relu(y)
        y = ops.conv1d(y, self.w2, stride=1, padding=self.w2.shape[2] // 2)
        y = ops.channel_affine(y, self.aff2_scale, self.aff2_offset, axis=1)
        shortcut = ops.conv1d(x, self.proj_w, stride=self.stride, padding=0)
        return ops.relu(ops.add(y, shortcut))


def compact_network(back_blocks: List[ResidualBlock], sum_axis: str = "width",
                    keep_coords: bool = False, q_shift: bool = False,
                    dtype=np.float32) -> List[PointBlock]:
    """Map every 2D residual block to its 1D counterpart, preserving topology
    (channel widths, strides, activation placement, shortcut)."""
    qblocks = []
    for i, blk in enumerate(back_blocks):
        if not isinstance(blk, ResidualBlock):
            raise ConfigError(f"no 1D counterpart defined for layer {type(blk).__name__}")
        w1 = compact_kernel(blk.w1, sum_axis).result
        w2 = compact_kernel(blk.w2, sum_axis).result
        proj = compact_kernel(blk.proj_w, sum_axis).result
        if i == 0 and keep_coords:
            # widen the first layer for the 3 coordinate channels, zero-init
            w1 = np.concatenate([w1, np.zeros((w1.shape[0], 3, w1.shape[2]), w1.dtype)], axis=1)
            proj = np.concatenate([proj, np.zeros((proj.shape[0], 3, proj.shape[2]), proj.dtype)], axis=1)
        qblocks.append(PointBlock(
            blk.name,
            w1,
            (blk.aff1_scale.data.copy(), blk.aff1_offset.data.copy()),
            w2,
            (blk.aff2_scale.data.copy(), blk.aff2_offset.data.copy()),
            proj,
            blk.stride,
            shift_fraction=blk.shift_fraction if q_shift else 0.0,
            dtype=dtype,
        ))
    return qblocks


def point_forward(qblocks: List[PointBlock], p_tilde: Tensor) -> Tensor:
    """Run the ranked points (B, C, N) through the compacted blocks."""
    y = p_tilde
    for blk in qblocks:
        y = blk.forward(y)
    return y


class FusionHead:
    """Single dense layer over concat(GAP(X_l), mean-pooled point feature).

    Weight starts at zero so fused logits begin uniform regardless of the
    scale the trained features arrive at; random init here saturates the
    softmax on step one and destabilizes fine-tuning, and even a small
    random scale leaks noise gradients into the trained front before the
    head means anything."""

    def __init__(self, in_dim: int, classes: int, rng=None, dtype=np.float32,
                 name: str = "fuse"):
        self.in_dim = in_dim
        self.classes = classes
        self.name = name
        self.w = parameter(np.zeros((classes, in_dim)), f"{name}.fc.w", dtype)
        self.b = parameter(np.zeros(classes), f"{name}.fc.b", dtype)

    def params(self):
        return {f"{self.name}.fc.w": self.w, f"{self.name}.fc.b": self.b}


def fuse_predict(x_l: Optional[Tensor], e_f: Tensor, w: Tensor, b: Tensor,
                 use_gap: bool = True) -> Tensor:
    """y_cls = fc(concat(GAP(X_l), mean over points of e_f)).

    x_l: (B, C, T, H, W) or None when the global branch is disabled;
    e_f: (B, C', N')."""
    if e_f.ndim != 3:
        raise ShapeError(f"point feature must be (B, C', N'), got {e_f.ndim}-d")
    pooled_e = ops.mean(e_f, axis=2)
    if use_gap:
        if x_l is None:
            raise ShapeError("global branch enabled but no feature map given")
        if x_l.ndim != 5:
            raise ShapeError(f"feature map must be (B, C, T, H, W), got {x_l.ndim}-d")
        pooled_x = ops.mean(x_l, axis=(2, 3, 4))
        fused = ops.concat([pooled_x, pooled_e], axis=1)
    else:
        fused = pooled_e
    return ops.dense(fused, w, b)
