"""Keypoint selection, ranking, coordinate normalization, and the learned
feature/position transform.

Selection and ranking are hard (non-differentiable) reorderings: indices are
computed on detached score arrays, while feature gathers stay differentiable
so gradients reach the selected positions of the feature map.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .keypoints import Heatmap
from .tensor import Tensor, kink_tracking, parameter


def point_count(alpha: float, t: int, h: int, w: int) -> int:
    """N = round(alpha*T*H*W), half-up, clamped to at least one point."""
    if not 0 < alpha <= 1:
        raise ConfigError(f"sampling ratio alpha must be in (0, 1], got {alpha}")
    return max(1, int(np.floor(alpha * t * h * w + 0.5)))


@dataclass
class PointSet:
    features: Tensor       # (B, C, N), graph-connected to the feature map
    coords: np.ndarray     # (B, N, 3) ints, each row (x, y, t)
    scores: np.ndarray     # (B, N) heatmap scores
    ordered: bool          # True once rank_points has run
    grid: Tuple[int, int, int]   # (T, H, W) of the selection layer

    @property
    def n(self) -> int:
        return self.coords.shape[1]


@dataclass
class RankingConfig:
    tau: Optional[float] = None   # None resolves to H+W of the selection grid
    tie_break: str = "stable"

    def __post_init__(self):
        if self.tau is not None and self.tau <= 1:
            raise ConfigError(f"ranking weight tau must exceed 1, got {self.tau}")
        if self.tie_break != "stable":
            raise ConfigError(f"unsupported tie-break rule {self.tie_break!r}")

    def resolve_tau(self, grid) -> float:
        return float(self.tau) if self.tau is not None else float(grid[1] + grid[2])


@dataclass
class NormalizedCoords:
    dprime: np.ndarray     # (B, N, 3) reals, centered and scaled
    centroid: np.ndarray   # (B, 3)
    radius: np.ndarray     # (B,) max distance used as divisor (1 if degenerate)


def _scores_array(hm) -> np.ndarray:
    if isinstance(hm, Heatmap):
        hm = hm.norm
    if isinstance(hm, Tensor):
        hm = hm.data
    return np.asarray(hm)


def select_topn(hm, x, alpha: float) -> PointSet:
    """Pick the N highest-scoring positions across the whole clip.

    hm: normalized scores (B, T, H, W) or (T, H, W); x: features (B, C, T, H, W)
    or (C, T, H, W). Ties broken by ascending (t, y, x). Output order is by
    descending score (rank_points imposes the spatial order later).
    """
    scores = _scores_array(hm)
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    if scores.ndim == 3:
        scores = scores[None]
    if x.ndim == 4:
        x = ops.reshape(x, (1,) + x.shape)
    if scores.ndim != 4 or x.ndim != 5:
        raise ShapeError(f"scores must be (B, T, H, W) and features (B, C, T, H, W), "
                         f"got {scores.shape} and {x.shape}")
    b, c, t, h, w = x.shape
    if scores.shape != (b, t, h, w):
        raise ShapeError(f"scores shape {scores.shape} != ({b}, {t}, {h}, {w})")
    n = point_count(alpha, t, h, w)
    flat = scores.reshape(b, t * h * w)
    # stable sort on negated scores: descending, ties by ascending flat index,
    # i.e. ascending (t, y, x)
    full_order = np.argsort(-flat, axis=1, kind="stable")
    order = full_order[:, :n]
    tt = order // (h * w)
    rem = order % (h * w)
    yy = rem // w
    xx = rem % w
    coords = np.stack([xx, yy, tt], axis=2).astype(np.int64)
    feats = ops.take_points(ops.reshape(x, (b, c, t * h * w)), order)
    if kink_tracking() and n < flat.shape[1]:
        # membership margin: last score in vs first score out
        edge = np.take_along_axis(flat, full_order[:, n - 1:n + 1], axis=1)
        feats.kink = float((edge[:, 0] - edge[:, 1]).min())
    picked = np.take_along_axis(flat, order, axis=1)
    return PointSet(features=feats, coords=coords, scores=picked,
                    ordered=False, grid=(t, h, w))


def rank_points(ps: PointSet, cfg: Optional[RankingConfig] = None) -> PointSet:
    """Stable descending sort by x + y + tau*t; a pure permutation."""
    cfg = cfg or RankingConfig()
    tau = cfg.resolve_tau(ps.grid)
    if tau <= 1:
        raise ConfigError(f"ranking weight tau must exceed 1, got {tau}")
    keys = (ps.coords[:, :, 0] + ps.coords[:, :, 1] + tau * ps.coords[:, :, 2]).astype(np.float64)
    perm = np.argsort(-keys, axis=1, kind="stable")
    feats = ops.take_points(ps.features, perm)
    coords = np.take_along_axis(ps.coords, perm[:, :, None], axis=1)
    scores = np.take_along_axis(ps.scores, perm, axis=1)
    return PointSet(features=feats, coords=coords, scores=scores,
                    ordered=True, grid=ps.grid)


def normalize_coords(coords) -> NormalizedCoords:
    """Center on the centroid and scale by the max point-to-centroid distance
    (distance < 1e-9 divides by 1 instead)."""
    if isinstance(coords, PointSet):
        coords = coords.coords
    d = np.asarray(coords, dtype=np.float64)
    squeeze = d.ndim == 2
    if squeeze:
        d = d[None]
    if d.ndim != 3 or d.shape[2] != 3:
        raise ShapeError(f"coords must be (B, N, 3) or (N, 3), got {d.shape}")
    centroid = d.mean(axis=1, keepdims=True)
    diff = d - centroid
    dist = np.sqrt((diff * diff).sum(axis=2))
    dmax = dist.max(axis=1)
    radius = np.where(dmax < 1e-9, 1.0, dmax)
    dn = diff / radius[:, None, None]
    if squeeze:
        return NormalizedCoords(dn[0], centroid[0, 0], radius[0])
    return NormalizedCoords(dn, centroid[:, 0, :], radius)


def augment(features: Tensor, dprime: np.ndarray) -> Tensor:
    """Append the 3 normalized coordinates as extra channels: (B, C+3, N)."""
    if features.ndim != 3:
        raise ShapeError(f"features must be (B, C, N), got {features.ndim}-d")
    b, _, n = features.shape
    if dprime.shape != (b, n, 3):
        raise ShapeError(f"normalized coords shape {dprime.shape} != ({b}, {n}, 3)")
    coords_cf = Tensor(np.ascontiguousarray(dprime.transpose(0, 2, 1),
                                            dtype=features.dtype))
    return ops.concat([features, coords_cf], axis=1)


class TransformNet:
    """Light point network emitting a (C+3)x(C+3) feature/position transform.

    Three kernel-1 1D conv layers (C+3 -> 64 -> 128 -> 256), max over points,
    three dense layers (256 -> 128 -> 64 -> (C+3)^2). The last layer starts at
    zero weight with identity bias, so the transform is exactly I at step 0.
    """

    WIDTHS = (64, 128, 256)
    FC_WIDTHS = (128, 64)

    def __init__(self, channels: int, rng=None, dtype=np.float32, name: str = "tnet"):
        if rng is None:
            rng = np.random.default_rng(0)
        self.channels = channels
        self.dim = channels + 3
        self.name = name
        c1, c2, c3 = self.WIDTHS
        f1, f2 = self.FC_WIDTHS
        def he(shape, fan):
            return rng.standard_normal(shape) * np.sqrt(2.0 / fan)
        self.conv1_w = parameter(he((c1, self.dim, 1), self.dim), f"{name}.conv1.w", dtype)
        self.conv2_w = parameter(he((c2, c1, 1), c1), f"{name}.conv2.w", dtype)
        self.conv3_w = parameter(he((c3, c2, 1), c2), f"{name}.conv3.w", dtype)
        self.fc1_w = parameter(he((f1, c3), c3), f"{name}.fc1.w", dtype)
        self.fc1_b = parameter(np.zeros(f1), f"{name}.fc1.b", dtype)
        self.fc2_w = parameter(he((f2, f1), f1), f"{name}.fc2.w", dtype)
        self.fc2_b = parameter(np.zeros(f2), f"{name}.fc2.b", dtype)
        self.fc3_w = parameter(np.zeros((self.dim * self.dim, f2)), f"{name}.fc3.w", dtype)
        self.fc3_b = parameter(np.eye(self.dim).reshape(-1), f"{name}.fc3.b", dtype)

    def params(self):
        n = self.name
        return {
            f"{n}.conv1.w": self.conv1_w, f"{n}.conv2.w": self.conv2_w,
            f"{n}.conv3.w": self.conv3_w,
            f"{n}.fc1.w": self.fc1_w, f"{n}.fc1.b": self.fc1_b,
            f"{n}.fc2.w": self.fc2_w, f"{n}.fc2.b": self.fc2_b,
            f"{n}.fc3.w": self.fc3_w, f"{n}.fc3.b": self.fc3_b,
        }

    def forward(self, aug: Tensor) -> Tensor:
        """(B, C+3, N) augmented points -> (B, C+3, C+3) transform matrices."""
        if aug.ndim != 3 or aug.shape[1] != self.dim:
            raise ShapeError(f"expected (B, {self.dim}, N) input, got {aug.shape}")
        b = aug.shape[0]
        y = ops.relu(ops.conv1d(aug, self.conv1_w, stride=1, padding=0))
        y = ops.relu(ops.conv1d(y, self.conv2_w, stride=1, padding=0))
        y = ops.relu(ops.conv1d(y, self.conv3_w, stride=1, padding=0))
        y = ops.reduce_max(y, axis=2)                        # (B, 256)
        y = ops.relu(ops.dense(y, self.fc1_w, self.fc1_b))
        y = ops.relu(ops.dense(y, self.fc2_w, self.fc2_b))
        y = ops.dense(y, self.fc3_w, self.fc3_b)
        return ops.reshape(y, (b, self.dim, self.dim))

    def matrix(self, features: Tensor, dprime: np.ndarray) -> Tensor:
        return self.forward(augment(features, dprime))


def apply_transform(features: Tensor, dprime: np.ndarray, a: Tensor,
                    keep_coords: bool = False) -> Tensor:
    """P_hat = concat(S, D')A, then keep the first C channels (or all C+3
    when keep_coords)."""
    aug = augment(features, dprime)
    if a.ndim != 3 or a.shape[1] != a.shape[2] or a.shape[1] != aug.shape[1]:
        raise ShapeError(f"transform matrix shape {a.shape} does not fit {aug.shape[1]} channels")
    # row-vector convention (N x (C+3)) @ A, expressed channels-first
    out = ops.matmul(ops.transpose(a, (0, 2, 1)), aug)
    if keep_coords:
        return out
    return ops.narrow(out, 1, 0, features.shape[1])


def dump_points(ps: PointSet, fileobj, clip: int = 0):
    """One line per point, `t,y,x,score`, in current (ranked) order."""
    for (x, y, t), s in zip(ps.coords[clip], ps.scores[clip]):
        fileobj.write(f"{t},{y},{x},{s:.6f}\n")
