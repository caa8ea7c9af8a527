"""Synthetic moving-square video benchmark and the per-clip binary format.

Each clip is one square of random intensity translating over a static block
texture with per-frame noise; the class is the motion direction. Masks mark
the square's pixels per frame.
"""

import os
import struct
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .config import TrainConfig
from .errors import ConfigError, FormatError

MAGIC = b"AKVD"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIIB")

# (vx, vy) per class: left, right, up, down, then the four diagonals
VELOCITIES = ((-1, 0), (1, 0), (0, -1), (0, 1),
              (-1, -1), (1, -1), (-1, 1), (1, 1))
CLASS_NAMES = ("left", "right", "up", "down",
               "up-left", "up-right", "down-left", "down-right")


def save_clip(path: str, frames: np.ndarray, label: int,
              mask: Optional[np.ndarray] = None):
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 4:
        raise FormatError(f"frames must be (T, C, H, W), got {frames.ndim}-d")
    t, c, h, w = frames.shape
    if mask is not None and mask.shape != (t, h, w):
        raise FormatError(f"mask shape {mask.shape} != ({t}, {h}, {w})")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, t, c, h, w, label,
                             0 if mask is None else 1))
        f.write(frames.tobytes())
        if mask is not None:
            f.write(np.ascontiguousarray(mask, dtype=np.uint8).tobytes())


def load_clip(path: str) -> Tuple[np.ndarray, int, Optional[np.ndarray]]:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, t, c, h, w, label, has_mask = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = _HEADER.size
    nframes = t * c * h * w
    expect = off + 4 * nframes + (t * h * w if has_mask else 0)
    if len(buf) != expect:
        raise FormatError(f"{path}: expected {expect} bytes, found {len(buf)}")
    frames = np.frombuffer(buf, dtype="<f4", count=nframes, offset=off)
    frames = frames.reshape(t, c, h, w).astype(np.float32)
    mask = None
    if has_mask:
        mask = np.frombuffer(buf, dtype=np.uint8, offset=off + 4 * nframes)
        mask = mask.reshape(t, h, w).astype(bool)
    return frames, int(label), mask


def gen_clip(rng: np.random.Generator, label: int, t: int, h: int, w: int,
             noise: float, side: int, speed: int):
    """One clip: (frames (T, 3, H, W) float32 in [0, 1], mask (T, H, W) bool)."""
    if not 0 <= label < len(VELOCITIES):
        raise ConfigError(f"label {label} has no motion program")
    vx, vy = (v * speed for v in VELOCITIES[label])
    tx, ty = vx * (t - 1), vy * (t - 1)
    x_lo, x_hi = max(0, -tx), w - side - max(0, tx)
    y_lo, y_hi = max(0, -ty), h - side - max(0, ty)
    if x_hi < x_lo or y_hi < y_lo:
        raise ConfigError(
            f"object of side {side} at speed {speed} does not fit {h}x{w} over {t} frames")
    x0 = int(rng.integers(x_lo, x_hi + 1))
    y0 = int(rng.integers(y_lo, y_hi + 1))
    block = 8
    coarse = rng.uniform(0.35, 0.65, (3, -(-h // block), -(-w // block)))
    bg = np.repeat(np.repeat(coarse, block, axis=1), block, axis=2)[:, :h, :w]
    color = 0.5 + rng.choice((-1.0, 1.0), 3) * rng.uniform(0.25, 0.5, 3)
    frames = np.empty((t, 3, h, w), dtype=np.float32)
    mask = np.zeros((t, h, w), dtype=bool)
    for i in range(t):
        x, y = x0 + vx * i, y0 + vy * i
        canvas = bg.copy()
        canvas[:, y:y + side, x:x + side] = color[:, None, None]
        if noise > 0:
            canvas = canvas + rng.normal(0.0, noise, canvas.shape)
        frames[i] = np.clip(canvas, 0.0, 1.0)
        mask[i, y:y + side, x:x + side] = True
    return frames, mask


def gen_dataset(out_dir: str, cfg: TrainConfig) -> Tuple[int, int]:
    """Write train/ and val/ clip files; labels cycle through the classes."""
    rng = np.random.default_rng(cfg.seed)
    for sub, count in (("train", cfg.train_count), ("val", cfg.val_count)):
        d = os.path.join(out_dir, sub)
        os.makedirs(d, exist_ok=True)
        for i in range(count):
            label = i % cfg.classes
            frames, mask = gen_clip(rng, label, cfg.clip_len, cfg.height,
                                    cfg.width, cfg.noise, cfg.side, cfg.speed)
            save_clip(os.path.join(d, f"clip_{i:05d}.akv"), frames, label, mask)
    return cfg.train_count, cfg.val_count


@dataclass
class ClipBatch:
    frames: np.ndarray            # (n, T, C, H, W) float32
    labels: np.ndarray            # (n,) int64
    masks: Optional[np.ndarray]   # (n, T, H, W) bool, or None

    def __len__(self):
        return self.frames.shape[0]


def load_dataset(directory: str) -> ClipBatch:
    names = sorted(fn for fn in os.listdir(directory) if fn.endswith(".akv"))
    if not names:
        raise FormatError(f"no .akv clips in {directory}")
    frames: List[np.ndarray] = []
    labels: List[int] = []
    masks: List[Optional[np.ndarray]] = []
    for fn in names:
        fr, label, mask = load_clip(os.path.join(directory, fn))
        if frames and fr.shape != frames[0].shape:
            raise FormatError(f"{fn}: clip shape {fr.shape} differs from {frames[0].shape}")
        frames.append(fr)
        labels.append(label)
        masks.append(mask)
    have_masks = all(m is not None for m in masks)
    return ClipBatch(
        frames=np.stack(frames),
        labels=np.asarray(labels, dtype=np.int64),
        masks=np.stack(masks) if have_masks else None,
    )
