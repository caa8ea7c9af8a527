"""Model assembly: the stage-1 plain backbone classifier and the stage-2
split pipeline (front features -> heatmap -> keypoints -> 1D classifier),
plus checkpoint meta round-tripping."""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import ops
from .backbone import (DEFAULT_CHANNELS, DEFAULT_STRIDES, Backbone,
                       NetworkSplit, split_at)
from .classifier import FusionHead, compact_network, fuse_predict, point_forward
from .config import TrainConfig
from .errors import ConfigError, FormatError
from .keypoints import Heatmap, KeypointHead, attention_reweight, energy_reg
from .points import (PointSet, RankingConfig, TransformNet, apply_transform,
                     augment, normalize_coords, rank_points, select_topn)
from .tensor import Tensor, parameter


def _as_clip(clip) -> Tensor:
    x = clip if isinstance(clip, Tensor) else Tensor(np.asarray(clip))
    if x.ndim == 4:
        x = ops.reshape(x, (1,) + x.shape)
    return x


@dataclass
class ForwardResult:
    y_cls: Tensor
    y_aux: Tensor
    heatmap: Heatmap
    points: PointSet
    r_e: Tensor
    x_l: Tensor
    e_f: Tensor


class StageOneModel:
    """Plain backbone + global-pool classifier head."""

    def __init__(self, cfg: TrainConfig, rng=None, dtype=np.float32,
                 channels=DEFAULT_CHANNELS, strides=DEFAULT_STRIDES):
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.channels = tuple(channels)
        self.strides = tuple(strides)
        self.backbone = Backbone(channels, strides, in_channels=3,
                                 shift_fraction=cfg.shift, rng=rng, dtype=dtype)
        c = self.backbone.out_channels
        self.fc_w = parameter(rng.standard_normal((cfg.classes, c)) * np.sqrt(1.0 / c),
                              "head.fc.w", dtype)
        self.fc_b = parameter(np.zeros(cfg.classes), "head.fc.b", dtype)

    def forward(self, clip) -> Tensor:
        feat = self.backbone.forward(_as_clip(clip))       # (B, T, C, H, W)
        pooled = ops.mean(feat, axis=(1, 3, 4))
        return ops.dense(pooled, self.fc_w, self.fc_b)

    def params(self) -> Dict[str, Tensor]:
        merged = self.backbone.params()
        merged["head.fc.w"] = self.fc_w
        merged["head.fc.b"] = self.fc_b
        return merged

    def trainable_params(self) -> Dict[str, Tensor]:
        return self.params()

    def meta(self) -> Dict[str, np.ndarray]:
        return _meta(self.cfg, 1, self.channels, self.strides)


class AKModel:
    """Stage-2 pipeline around a split backbone."""

    def __init__(self, backbone: Backbone, cfg: TrainConfig, rng=None,
                 dtype=np.float32):
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.backbone = backbone
        self.split: NetworkSplit = split_at(backbone, cfg.split)
        if not self.split.back:
            raise ConfigError(f"split at {cfg.split} leaves no back sub-network")
        self.channels = backbone.stage_channels(cfg.split)
        self.out_channels = self.split.back[-1].cout
        self.kp = KeypointHead(self.channels, cfg.classes, r=4, rng=rng, dtype=dtype)
        self.tnet = TransformNet(self.channels, rng=rng, dtype=dtype) if cfg.transform else None
        self.qblocks = compact_network(self.split.back, cfg.sum_axis,
                                       cfg.keep_coords, cfg.q_shift, dtype)
        fuse_in = (self.channels if cfg.concat else 0) + self.out_channels
        self.fuse = FusionHead(fuse_in, cfg.classes, rng=rng, dtype=dtype)

    def forward(self, clip) -> ForwardResult:
        cfg = self.cfg
        x5 = self.split.forward_front(_as_clip(clip))       # (B, T, C, Hl, Wl)
        x_l = ops.transpose(x5, (0, 2, 1, 3, 4))            # (B, C, T, Hl, Wl)
        hm = self.kp.heatmap(x_l)
        ps = select_topn(hm.norm, x_l, cfg.alpha)
        if cfg.rank:
            ps = rank_points(ps, RankingConfig(cfg.tau))
        nc = normalize_coords(ps.coords)
        if self.tnet is not None:
            a = self.tnet.matrix(ps.features, nc.dprime)
            p_tilde = apply_transform(ps.features, nc.dprime, a, cfg.keep_coords)
        elif cfg.keep_coords:
            p_tilde = augment(ps.features, nc.dprime)
        else:
            p_tilde = ps.features
        e_f = point_forward(self.qblocks, p_tilde)
        y_cls = fuse_predict(x_l if cfg.concat else None, e_f,
                             self.fuse.w, self.fuse.b, cfg.concat)
        y_aux = self.kp.aux_predict(attention_reweight(x_l, hm))
        r_e = energy_reg(hm)
        return ForwardResult(y_cls=y_cls, y_aux=y_aux, heatmap=hm, points=ps,
                             r_e=r_e, x_l=x_l, e_f=e_f)

    def params(self) -> Dict[str, Tensor]:
        merged = self.split.front_params()
        merged.update(self.kp.params())
        if self.tnet is not None:
            merged.update(self.tnet.params())
        for blk in self.qblocks:
            merged.update(blk.params())
        merged.update(self.fuse.params())
        return merged

    def trainable_params(self) -> Dict[str, Tensor]:
        if not self.cfg.freeze_front:
            return self.params()
        front = set(self.split.front_params())
        return {k: v for k, v in self.params().items() if k not in front}

    def meta(self) -> Dict[str, np.ndarray]:
        cfg = self.cfg
        meta = _meta(cfg, 2, tuple(b.cout for b in self.backbone.blocks),
                     tuple(b.stride for b in self.backbone.blocks))
        meta.update({
            "meta.split": np.float32(self.backbone.stages.index(cfg.split)),
            "meta.alpha": np.float32(cfg.alpha),
            "meta.tau": np.float32(-1.0 if cfg.tau is None else cfg.tau),
            "meta.rank": np.float32(cfg.rank),
            "meta.reg": np.float32(cfg.reg),
            "meta.transform": np.float32(cfg.transform),
            "meta.concat": np.float32(cfg.concat),
            "meta.keep_coords": np.float32(cfg.keep_coords),
            "meta.q_shift": np.float32(cfg.q_shift),
            "meta.sum_axis": np.float32(0.0 if cfg.sum_axis == "width" else 1.0),
        })
        return meta


def _meta(cfg: TrainConfig, stage: int, channels, strides) -> Dict[str, np.ndarray]:
    return {
        "meta.stage": np.float32(stage),
        "meta.classes": np.float32(cfg.classes),
        "meta.clip_len": np.float32(cfg.clip_len),
        "meta.height": np.float32(cfg.height),
        "meta.width": np.float32(cfg.width),
        "meta.shift": np.float32(cfg.shift),
        "meta.channels": np.asarray(channels, dtype=np.float32),
        "meta.strides": np.asarray(strides, dtype=np.float32),
    }


def assign_params(params: Dict[str, Tensor], blobs: Dict[str, np.ndarray]):
    for name, p in params.items():
        if name not in blobs:
            raise FormatError(f"checkpoint missing parameter {name}")
        blob = blobs[name]
        if tuple(blob.shape) != p.shape:
            raise FormatError(
                f"checkpoint parameter {name} has shape {tuple(blob.shape)}, expected {p.shape}")
        p.data[...] = blob


def checkpoint_blobs(model) -> Dict[str, np.ndarray]:
    blobs = {name: p.data.copy() for name, p in model.params().items()}
    blobs.update(model.meta())
    return blobs


def new_stage1(cfg: TrainConfig, rng=None) -> StageOneModel:
    return StageOneModel(cfg, rng=rng)


def new_stage2(cfg: TrainConfig, stage1_blobs: Dict[str, np.ndarray],
               rng=None) -> AKModel:
    """Build the split pipeline from a trained stage-1 checkpoint; the 1D
    classifier starts from the compacted back-stage weights."""
    if "meta.stage" not in stage1_blobs:
        raise FormatError("checkpoint lacks meta blobs")
    if int(stage1_blobs["meta.stage"]) != 1:
        raise FormatError("stage-2 training needs a stage-1 checkpoint")
    if int(stage1_blobs["meta.classes"]) != cfg.classes:
        raise ConfigError(
            f"checkpoint trained for {int(stage1_blobs['meta.classes'])} classes, "
            f"config says {cfg.classes}")
    channels = tuple(int(c) for c in stage1_blobs["meta.channels"])
    strides = tuple(int(s) for s in stage1_blobs["meta.strides"])
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    backbone = Backbone(channels, strides, in_channels=3,
                        shift_fraction=cfg.shift, rng=rng)
    assign_params(backbone.params(), stage1_blobs)
    return AKModel(backbone, cfg, rng=rng)


def _cfg_from_meta(blobs: Dict[str, np.ndarray]) -> TrainConfig:
    cfg = TrainConfig()
    cfg.classes = int(blobs["meta.classes"])
    cfg.clip_len = int(blobs["meta.clip_len"])
    cfg.height = int(blobs["meta.height"])
    cfg.width = int(blobs["meta.width"])
    cfg.shift = float(blobs["meta.shift"])
    cfg.stage = int(blobs["meta.stage"])
    if cfg.stage == 2:
        from .backbone import STAGE_NAMES
        cfg.split = STAGE_NAMES[int(blobs["meta.split"])]
        cfg.alpha = float(blobs["meta.alpha"])
        tau = float(blobs["meta.tau"])
        cfg.tau = None if tau < 0 else tau
        cfg.rank = bool(blobs["meta.rank"])
        cfg.reg = bool(blobs["meta.reg"])
        cfg.transform = bool(blobs["meta.transform"])
        cfg.concat = bool(blobs["meta.concat"])
        cfg.keep_coords = bool(blobs["meta.keep_coords"])
        cfg.q_shift = bool(blobs["meta.q_shift"])
        cfg.sum_axis = "width" if float(blobs["meta.sum_axis"]) == 0.0 else "height"
    return cfg


def model_from_checkpoint(blobs: Dict[str, np.ndarray]):
    """Rebuild a model (stage 1 or 2) from checkpoint blobs."""
    if "meta.stage" not in blobs:
        raise FormatError("checkpoint lacks meta blobs")
    cfg = _cfg_from_meta(blobs)
    channels = tuple(int(c) for c in blobs["meta.channels"])
    strides = tuple(int(s) for s in blobs["meta.strides"])
    rng = np.random.default_rng(0)
    if cfg.stage == 1:
        model = StageOneModel(cfg, rng=rng, channels=channels, strides=strides)
    else:
        backbone = Backbone(channels, strides, in_channels=3,
                            shift_fraction=cfg.shift, rng=rng)
        model = AKModel(backbone, cfg, rng=rng)
    assign_params(model.params(), blobs)
    return model
