"""Tiny stage-structured frame-wise 2D video backbone.

Five stages (stem, s2..s5), each one residual block of two 3x3 convolutions
with per-channel affine layers and a 1x1 projection shortcut. An optional
temporal-shift mixes adjacent frames at the start of every block. The network
can be split at an interior stage boundary into a front feature extractor and
a back classifier remainder.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .tensor import Tensor, parameter

STAGE_NAMES = ("stem", "s2", "s3", "s4", "s5")
DEFAULT_CHANNELS = (16, 32, 64, 96, 128)
DEFAULT_STRIDES = (2, 1, 2, 2, 2)
SPLIT_STAGES = ("s2", "s3", "s4")


@dataclass
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    padding: int
    stage: str


def _he(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def temporal_shift(x, fraction):
    """Shift on a (C, T, H, W) or (B, C, T, H, W) map: first fold of channels
    moves one frame forward in t (zeros enter at t=0), second fold one frame
    back, the rest pass through."""
    return ops.temporal_shift(x, fraction, time_axis=-3, channel_axis=-4)


class ResidualBlock:
    """shift -> conv3x3/s -> affine -> relu -> conv3x3 -> affine, plus a
    1x1/s projection shortcut from the unshifted input, relu after the add.

    Activations flow as (B, T, C, H, W); convolutions run frame-wise.
    """

    def __init__(self, name: str, cin: int, cout: int, stride: int,
                 shift_fraction: float, rng, dtype=np.float32):
        if cin < 1 or cout < 1:
            raise ConfigError(f"block {name}: channels must be positive, got {cin}->{cout}")
        if stride < 1:
            raise ConfigError(f"block {name}: stride must be >= 1, got {stride}")
        self.name = name
        self.cin = cin
        self.cout = cout
        self.stride = stride
        self.shift_fraction = shift_fraction
        self.w1 = parameter(_he(rng, (cout, cin, 3, 3), cin * 9), f"{name}.conv1.w", dtype)
        self.aff1_scale = parameter(np.ones(cout), f"{name}.aff1.scale", dtype)
        self.aff1_offset = parameter(np.zeros(cout), f"{name}.aff1.offset", dtype)
        self.w2 = parameter(_he(rng, (cout, cout, 3, 3), cout * 9), f"{name}.conv2.w", dtype)
        self.aff2_scale = parameter(np.ones(cout), f"{name}.aff2.scale", dtype)
        self.aff2_offset = parameter(np.zeros(cout), f"{name}.aff2.offset", dtype)
        self.proj_w = parameter(_he(rng, (cout, cin, 1, 1), cin), f"{name}.proj.w", dtype)

    def params(self):
        return {
            f"{self.name}.conv1.w": self.w1,
            f"{self.name}.aff1.scale": self.aff1_scale,
            f"{self.name}.aff1.offset": self.aff1_offset,
            f"{self.name}.conv2.w": self.w2,
            f"{self.name}.aff2.scale": self.aff2_scale,
            f"{self.name}.aff2.offset": self.aff2_offset,
            f"{self.name}.proj.w": self.proj_w,
        }

    def layer_specs(self) -> List[LayerSpec]:
        specs = []
        if self.shift_fraction > 0:
            specs.append(LayerSpec("temporal_shift", self.cin, self.cin, 0, 1, 0, self.name))
        specs.append(LayerSpec("conv2d", self.cin, self.cout, 3, self.stride, 1, self.name))
        specs.append(LayerSpec("conv2d", self.cout, self.cout, 3, 1, 1, self.name))
        specs.append(LayerSpec("conv2d", self.cin, self.cout, 1, self.stride, 0, self.name))
        return specs

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 5:
            raise ShapeError(f"block {self.name} expects (B, T, C, H, W), got {x.ndim}-d")
        b, t, c, h, w = x.shape
        if c != self.cin:
            raise ShapeError(f"block {self.name} expects {self.cin} channels, got {c}")
        branch = x
        if self.shift_fraction > 0:
            # time axis 1, channel axis 2 in this layout
            branch = ops.temporal_shift(branch, self.shift_fraction, time_axis=1, channel_axis=2)
        flat = ops.reshape(branch, (b * t, c, h, w))
        y = ops.conv2d(flat, self.w1, stride=self.stride, padding=1)
        y = ops.channel_affine(y, self.aff1_scale, self.aff1_offset, axis=1)
        y = ops.relu(y)
        y = ops.conv2d(y, self.w2, stride=1, padding=1)
        y = ops.channel_affine(y, self.aff2_scale, self.aff2_offset, axis=1)
        shortcut = ops.conv2d(ops.reshape(x, (b * t, c, h, w)), self.proj_w,
                              stride=self.stride, padding=0)
        out = ops.relu(ops.add(y, shortcut))
        ho, wo = out.shape[-2], out.shape[-1]
        return ops.reshape(out, (b, t, self.cout, ho, wo))


class Backbone:
    def __init__(self, channels: Sequence[int] = DEFAULT_CHANNELS,
                 strides: Sequence[int] = DEFAULT_STRIDES,
                 in_channels: int = 3, shift_fraction: float = 0.125,
                 seed: int = 0, rng=None, dtype=np.float32):
        channels = tuple(channels)
        strides = tuple(strides)
        if not channels:
            raise ConfigError("backbone needs at least one stage")
        if len(channels) > len(STAGE_NAMES):
            raise ConfigError(f"at most {len(STAGE_NAMES)} stages supported, got {len(channels)}")
        if len(strides) != len(channels):
            raise ConfigError(f"{len(channels)} stages but {len(strides)} strides")
        if any(c < 1 for c in channels):
            raise ConfigError(f"stage channels must be positive, got {channels}")
        if in_channels < 1:
            raise ConfigError(f"in_channels must be positive, got {in_channels}")
        if rng is None:
            rng = np.random.default_rng(seed)
        self.in_channels = in_channels
        self.shift_fraction = shift_fraction
        self.stages = STAGE_NAMES[:len(channels)]
        self.blocks: List[ResidualBlock] = []
        cin = in_channels
        for name, cout, stride in zip(self.stages, channels, strides):
            self.blocks.append(ResidualBlock(name, cin, cout, stride, shift_fraction, rng, dtype))
            cin = cout
        self.out_channels = cin

    def params(self):
        merged = {}
        for blk in self.blocks:
            merged.update(blk.params())
        return merged

    def layer_specs(self) -> List[LayerSpec]:
        specs = []
        for blk in self.blocks:
            specs.extend(blk.layer_specs())
        return specs

    def stage_channels(self, stage: str) -> int:
        for blk in self.blocks:
            if blk.name == stage:
                return blk.cout
        raise ConfigError(f"unknown stage {stage!r}; have {self.stages}")

    def forward(self, clip) -> Tensor:
        """clip: (B, T, C, H, W) or (T, C, H, W) -> (B, T, C', H', W')."""
        x = clip if isinstance(clip, Tensor) else Tensor(clip)
        if x.ndim == 4:
            x = ops.reshape(x, (1,) + x.shape)
        if x.ndim != 5:
            raise ShapeError(f"clip must be (B, T, C, H, W) or (T, C, H, W), got {x.ndim}-d")
        for blk in self.blocks:
            x = blk.forward(x)
        return x


@dataclass
class NetworkSplit:
    stage: str
    front: List[ResidualBlock]
    back: List[ResidualBlock]

    def forward_front(self, clip) -> Tensor:
        x = clip if isinstance(clip, Tensor) else Tensor(clip)
        if x.ndim == 4:
            x = ops.reshape(x, (1,) + x.shape)
        for blk in self.front:
            x = blk.forward(x)
        return x

    def forward_back(self, x: Tensor) -> Tensor:
        for blk in self.back:
            x = blk.forward(x)
        return x

    def front_params(self):
        merged = {}
        for blk in self.front:
            merged.update(blk.params())
        return merged

    def back_params(self):
        merged = {}
        for blk in self.back:
            merged.update(blk.params())
        return merged


def build_backbone(config: Optional[dict] = None, **kwargs) -> Backbone:
    """Construct a Backbone from a mapping; recognized keys: channels,
    strides, in_channels, shift (fraction), seed, dtype."""
    merged = dict(config or {})
    merged.update(kwargs)
    return Backbone(
        channels=merged.get("channels", DEFAULT_CHANNELS),
        strides=merged.get("strides", DEFAULT_STRIDES),
        in_channels=merged.get("in_channels", 3),
        shift_fraction=merged.get("shift", 0.125),
        seed=merged.get("seed", 0),
        rng=merged.get("rng"),
        dtype=merged.get("dtype", np.float32),
    )


def split_at(net: Backbone, stage: str) -> NetworkSplit:
    """Split after the named stage; only interior stages are valid."""
    if stage not in SPLIT_STAGES:
        raise ConfigError(f"split stage must be one of {SPLIT_STAGES}, got {stage!r}")
    if stage not in net.stages:
        raise ConfigError(f"backbone has stages {net.stages}, no {stage!r}")
    i = net.stages.index(stage)
    return NetworkSplit(stage, net.blocks[:i + 1], net.blocks[i + 1:])


def forward_features(split: NetworkSplit, clip) -> Tensor:
    """Run the front sub-network and return the feature map as (B, C, T, H, W)."""
    x = split.forward_front(clip)
    return ops.transpose(x, (0, 2, 1, 3, 4))
