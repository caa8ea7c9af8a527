"""Two-stage training loop, evaluation metrics, and the combined objective."""

import os
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .data import ClipBatch, load_dataset
from .errors import FormatError
from .model import (AKModel, ForwardResult, StageOneModel, checkpoint_blobs,
                    model_from_checkpoint, new_stage1, new_stage2)
from .tensor import Tensor, no_grad

LR_MILESTONES = (20, 40)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels under the logits."""
    b, k = logits.shape
    onehot = np.zeros((b, k), dtype=logits.dtype)
    onehot[np.arange(b), labels] = 1.0
    ls = ops.log_softmax(logits, axis=-1)
    return ops.neg(ops.mean(ops.tensor_sum(ops.mul(ls, Tensor(onehot)), axis=1)))


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float((logits.argmax(axis=1) == labels).mean())


@dataclass
class LossTerms:
    cls: float
    aux: float
    reg: float
    total: float


def total_loss(y_cls: Tensor, y_aux: Tensor, labels: np.ndarray,
               r_e: Optional[Tensor], use_reg: bool):
    """L = (L_cls + L_aux)/2 + r_e; without the regularizer the r_e term is
    dropped (and reported as 0)."""
    cls = cross_entropy(y_cls, labels)
    aux = cross_entropy(y_aux, labels)
    base = ops.mul(ops.add(cls, aux), 0.5)
    if use_reg and r_e is not None:
        total = ops.add(base, r_e)
        reg_val = r_e.item()
    else:
        total = base
        reg_val = 0.0
    return total, LossTerms(cls=cls.item(), aux=aux.item(), reg=reg_val,
                            total=total.item())


class SGD:
    """Momentum SGD over a fixed, name-sorted parameter set."""

    def __init__(self, params: Dict[str, Tensor], lr: float, momentum: float):
        self.names = sorted(params)
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {n: np.zeros_like(params[n].data) for n in self.names}

    def zero_grad(self):
        for n in self.names:
            self.params[n].grad = None

    def step(self):
        for n in self.names:
            p = self.params[n]
            if p.grad is None:
                continue
            v = self.velocity[n]
            v *= self.momentum
            v -= self.lr * p.grad.astype(v.dtype, copy=False)
            p.data += v


def lr_at(base: float, epoch: int) -> float:
    """Step decay x0.1 after each milestone epoch completes (epochs 1-based)."""
    factor = 1.0
    for m in LR_MILESTONES:
        if epoch > m:
            factor *= 0.1
    return base * factor


def _batches(n: int, batch: int, rng: Optional[np.random.Generator]):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch):
        yield order[start:start + batch]


def _mask_downsample(mask: np.ndarray, hl: int, wl: int) -> np.ndarray:
    """(.., H, W) boolean mask -> nearest-neighbor samples on an hl x wl grid."""
    h, w = mask.shape[-2], mask.shape[-1]
    ys = np.minimum(((np.arange(hl) + 0.5) * h / hl).astype(int), h - 1)
    xs = np.minimum(((np.arange(wl) + 0.5) * w / wl).astype(int), w - 1)
    return mask[..., ys, :][..., :, xs]


@dataclass
class EvalReport:
    top1: float
    n_clips: int
    in_mask: Optional[float] = None
    chance: Optional[float] = None
    per_frame: Optional[np.ndarray] = None

    def lines(self) -> List[str]:
        out = [f"top1 {self.top1:.6f}", f"clips {self.n_clips}"]
        if self.in_mask is not None:
            out.append(f"keypoint_in_mask {self.in_mask:.6f}")
            out.append(f"chance {self.chance:.6f}")
        if self.per_frame is not None:
            counts = " ".join(f"{c:.2f}" for c in self.per_frame)
            out.append(f"points_per_frame {counts}")
        return out


def evaluate_model(model, clips: ClipBatch, batch: int = 16) -> EvalReport:
    n = len(clips)
    correct = 0
    stage2 = isinstance(model, AKModel)
    in_mask_sum = 0.0
    chance_sum = 0.0
    mask_clips = 0
    per_frame = None
    with no_grad():
        for idx in _batches(n, batch, rng=None):
            x = Tensor(clips.frames[idx])
            labels = clips.labels[idx]
            if stage2:
                res: ForwardResult = model.forward(x)
                logits = res.y_cls.data
                tt, hl, wl = res.points.grid
                if per_frame is None:
                    per_frame = np.zeros(tt)
                frame_ids = res.points.coords[:, :, 2]
                for row in range(len(idx)):
                    per_frame += np.bincount(frame_ids[row], minlength=tt) / n
                if clips.masks is not None:
                    mask_ds = _mask_downsample(clips.masks[idx], hl, wl)
                    coords = res.points.coords
                    for row in range(len(idx)):
                        x_, y_, t_ = coords[row, :, 0], coords[row, :, 1], coords[row, :, 2]
                        hits = mask_ds[row, t_, y_, x_]
                        in_mask_sum += float(hits.mean())
                        chance_sum += float(mask_ds[row].mean())
                        mask_clips += 1
            else:
                logits = model.forward(x).data
            correct += int((logits.argmax(axis=1) == labels).sum())
    report = EvalReport(top1=correct / n, n_clips=n)
    if mask_clips:
        report.in_mask = in_mask_sum / mask_clips
        report.chance = chance_sum / mask_clips
    if per_frame is not None:
        report.per_frame = per_frame
    return report


def evaluate(ckpt_path: str, data_dir: str) -> EvalReport:
    model = model_from_checkpoint(load_checkpoint(ckpt_path))
    clips = load_dataset(data_dir)
    expect = (model.cfg.clip_len, 3, model.cfg.height, model.cfg.width)
    if clips.frames.shape[1:] != expect:
        raise FormatError(
            f"clips have shape {clips.frames.shape[1:]}, checkpoint expects {expect}")
    return evaluate_model(model, clips)


def _epoch_line(epoch, lr, loss, cls, aux, reg, train_acc, val_acc) -> str:
    return (f"epoch {epoch} lr {lr:.6f} loss {loss:.6f} cls {cls:.6f} "
            f"aux {aux:.6f} reg {reg:.6f} train_acc {train_acc:.6f} "
            f"val_acc {val_acc:.6f}")


@dataclass
class TrainResult:
    ckpt_path: str
    metrics_path: str
    lines: List[str]
    final_val_acc: float
    epochs_run: int


def _run_training(model, cfg: TrainConfig, train_clips: ClipBatch,
                  val_clips: ClipBatch, out_dir: str, stage: int,
                  echo=None) -> TrainResult:
    opt = SGD(model.trainable_params(), cfg.lr, cfg.momentum)
    shuffle_rng = np.random.default_rng(cfg.seed)
    n = len(train_clips)
    lines: List[str] = []
    val_acc = 0.0
    epochs_run = 0
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = lr_at(cfg.lr, epoch)
        sums = {"loss": 0.0, "cls": 0.0, "aux": 0.0, "reg": 0.0}
        correct = 0
        for idx in _batches(n, cfg.batch, shuffle_rng):
            x = Tensor(train_clips.frames[idx])
            labels = train_clips.labels[idx]
            opt.zero_grad()
            if stage == 1:
                logits = model.forward(x)
                loss = cross_entropy(logits, labels)
                terms = LossTerms(cls=loss.item(), aux=0.0, reg=0.0, total=loss.item())
            else:
                res = model.forward(x)
                logits = res.y_cls
                loss, terms = total_loss(res.y_cls, res.y_aux, labels,
                                         res.r_e, cfg.reg)
                if not cfg.reg:
                    terms.reg = res.r_e.item()   # measured, not optimized
            loss.backward()
            opt.step()
            b = len(idx)
            sums["loss"] += terms.total * b
            sums["cls"] += terms.cls * b
            sums["aux"] += terms.aux * b
            sums["reg"] += terms.reg * b
            correct += int((logits.data.argmax(axis=1) == labels).sum())
        val_acc = evaluate_model(model, val_clips, cfg.batch).top1
        line = _epoch_line(epoch, opt.lr, sums["loss"] / n, sums["cls"] / n,
                           sums["aux"] / n, sums["reg"] / n, correct / n, val_acc)
        lines.append(line)
        if echo:
            echo(line)
        epochs_run = epoch
        if cfg.stop_acc > 0 and val_acc >= cfg.stop_acc and epoch >= cfg.min_epochs:
            break
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, f"stage{stage}.akck")
    metrics_path = os.path.join(out_dir, f"stage{stage}_metrics.txt")
    save_checkpoint(ckpt_path, checkpoint_blobs(model))
    with open(metrics_path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")
    return TrainResult(ckpt_path=ckpt_path, metrics_path=metrics_path,
                       lines=lines, final_val_acc=val_acc, epochs_run=epochs_run)


def _warm_start_fusion(model, clips: ClipBatch, batch: int,
                       fit_clips: int = 512) -> None:
    """Ridge-fit the global block of the fusion fc before SGD touches it.

    The zero-initialized head would spend epochs relearning what stage 1
    already knows, and during that warmup the energy regularizer saturates
    the heatmap; a closed-form least-squares start lets early stopping fire
    while the heatmap still tracks the input. Only the GAP(X_l) columns are
    fitted: the point-feature columns stay zero because selected-point
    statistics jump whenever top-N membership churns, and a head fitted to
    them destroys itself within steps. The point branch wakes gradually as
    its columns grow, exactly like the plain zero init."""
    if not model.cfg.concat:
        return
    k = min(len(clips), fit_clips)
    feats = []
    with no_grad():
        for i in range(0, k, batch):
            res = model.forward(Tensor(clips.frames[i:i + batch]))
            feats.append(res.x_l.data.mean(axis=(2, 3, 4)))
    x = np.concatenate(feats)
    n_gap = x.shape[1]
    x = np.concatenate([x, np.ones((len(x), 1), x.dtype)], axis=1)
    y = np.eye(model.cfg.classes)[clips.labels[:k]] * 2.0
    lam = 1e-3 * np.trace(x.T @ x) / x.shape[1]
    w = np.linalg.solve(x.T @ x + lam * np.eye(x.shape[1]), x.T @ y).T
    model.fuse.w.data[:] = 0.0
    model.fuse.w.data[:, :n_gap] = w[:, :-1]
    model.fuse.b.data[:] = w[:, -1]


def train(cfg: TrainConfig, data_dir: str, out_dir: str, echo=None) -> TrainResult:
    """Dispatch on cfg.stage; stage 2 initializes from a stage-1 checkpoint
    (cfg.init, or stage1.akck in the output directory)."""
    train_clips = load_dataset(os.path.join(data_dir, "train"))
    val_clips = load_dataset(os.path.join(data_dir, "val"))
    if cfg.stage == 1:
        model = new_stage1(cfg)
    else:
        init = cfg.init or os.path.join(out_dir, "stage1.akck")
        if not os.path.exists(init):
            raise FileNotFoundError(
                f"stage 2 needs a stage-1 checkpoint; none at {init}")
        model = new_stage2(cfg, load_checkpoint(init))
        _warm_start_fusion(model, train_clips, cfg.batch)
    return _run_training(model, cfg, train_clips, val_clips, out_dir,
                         cfg.stage, echo)
