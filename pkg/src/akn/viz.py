"""Plain-PPM/PGM renderings of clips, heatmaps, and selected keypoints.

No imaging dependency: P6/P5 writers plus nearest-neighbor upsampling are
enough to eyeball what the selector is doing.
"""

import os

import numpy as np

from .model import AKModel, ForwardResult, _as_clip
from .points import dump_points
from .tensor import no_grad

CROSS_ARM = 2


def _to_u8(img: np.ndarray) -> np.ndarray:
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path: str, image: np.ndarray):
    """image: (3, H, W) float in [0, 1]."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected (3, H, W), got {image.shape}")
    _, h, w = image.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(_to_u8(image).transpose(1, 2, 0).tobytes())


def write_pgm(path: str, image: np.ndarray):
    """image: (H, W) float in [0, 1]."""
    if image.ndim != 2:
        raise ValueError(f"expected (H, W), got {image.shape}")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(_to_u8(image).tobytes())


def upsample_nearest(image: np.ndarray, h: int, w: int) -> np.ndarray:
    """Nearest-neighbor resize of the trailing two axes to (h, w)."""
    hs, ws = image.shape[-2], image.shape[-1]
    ys = (np.arange(h) * hs) // h
    xs = (np.arange(w) * ws) // w
    return image[..., ys, :][..., :, xs]


def _mark_cross(frame: np.ndarray, y: int, x: int):
    """Red cross centered at (y, x) on a (3, H, W) frame, in place."""
    h, w = frame.shape[1], frame.shape[2]
    y0, y1 = max(0, y - CROSS_ARM), min(h, y + CROSS_ARM + 1)
    x0, x1 = max(0, x - CROSS_ARM), min(w, x + CROSS_ARM + 1)
    frame[0, y0:y1, x] = 1.0
    frame[1, y0:y1, x] = 0.0
    frame[2, y0:y1, x] = 0.0
    frame[0, y, x0:x1] = 1.0
    frame[1, y, x0:x1] = 0.0
    frame[2, y, x0:x1] = 0.0


def render_clip(model: AKModel, frames: np.ndarray, out_dir: str) -> ForwardResult:
    """Write per-frame PPMs with keypoint crosses, heatmap PGMs, and the
    selected-point dump for one clip of shape (T, 3, H, W)."""
    os.makedirs(out_dir, exist_ok=True)
    with no_grad():
        res = model.forward(_as_clip(frames))
    t, _, h, w = frames.shape
    tl, hl, wl = res.points.grid
    sy, sx = h // hl, w // wl
    marked = frames.astype(np.float64).copy()
    coords = res.points.coords[0]
    for x_, y_, t_ in coords:
        _mark_cross(marked[t_], int(y_) * sy + sy // 2, int(x_) * sx + sx // 2)
    heat = res.heatmap.norm.data[0]                       # (T, Hl, Wl)
    for i in range(t):
        write_ppm(os.path.join(out_dir, f"frame_{i:02d}.ppm"), marked[i])
        write_pgm(os.path.join(out_dir, f"heat_{i:02d}.pgm"),
                  upsample_nearest(heat[i], h, w))
    with open(os.path.join(out_dir, "points.txt"), "w", encoding="utf-8") as f:
        dump_points(res.points, f)
    return res
