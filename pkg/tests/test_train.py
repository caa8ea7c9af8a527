"""Training loop pieces: losses, the optimizer, LR schedule, evaluation
bookkeeping, and end-to-end determinism at toy scale."""

import os
import re

import numpy as np
import pytest

from akn.config import TrainConfig
from akn.data import ClipBatch, gen_dataset
from akn.tensor import Tensor, parameter
from akn.train import (LR_MILESTONES, SGD, EvalReport, _epoch_line,
                       _mask_downsample, accuracy, cross_entropy,
                       evaluate_model, lr_at, total_loss, train)
from oracles import cross_entropy_naive

LINE_RE = re.compile(
    r"^epoch \d+ lr \d+\.\d{6} loss \d+\.\d{6} cls \d+\.\d{6} "
    r"aux \d+\.\d{6} reg \d+\.\d{6} train_acc \d+\.\d{6} val_acc \d+\.\d{6}$")


def test_cross_entropy_uniform_is_log_k():
    logits = Tensor(np.zeros((3, 4), dtype=np.float64))
    loss = cross_entropy(logits, np.array([0, 1, 2]))
    assert loss.item() == pytest.approx(np.log(4.0), rel=1e-12)


def test_cross_entropy_matches_naive(rng):
    logits = rng.standard_normal((6, 5))
    labels = rng.integers(0, 5, size=6)
    loss = cross_entropy(Tensor(logits), labels)
    assert loss.item() == pytest.approx(cross_entropy_naive(logits, labels),
                                        rel=1e-10)


def test_cross_entropy_perfect_prediction_near_zero():
    logits = np.full((2, 4), -30.0)
    logits[0, 1] = 30.0
    logits[1, 3] = 30.0
    loss = cross_entropy(Tensor(logits), np.array([1, 3]))
    assert loss.item() < 1e-8


def test_accuracy():
    logits = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 1.0]])
    assert accuracy(logits, np.array([0, 1, 1])) == pytest.approx(2 / 3)


def test_total_loss_averages_heads(rng):
    y_cls = Tensor(rng.standard_normal((4, 3)))
    y_aux = Tensor(rng.standard_normal((4, 3)))
    labels = rng.integers(0, 3, size=4)
    r_e = Tensor(np.float64(0.25))
    loss, terms = total_loss(y_cls, y_aux, labels, r_e, use_reg=True)
    expect = 0.5 * (terms.cls + terms.aux) + 0.25
    assert terms.reg == pytest.approx(0.25)
    assert loss.item() == pytest.approx(expect, rel=1e-10)
    assert terms.total == pytest.approx(expect, rel=1e-10)


def test_total_loss_reg_off_drops_energy_term(rng):
    y_cls = Tensor(rng.standard_normal((4, 3)))
    y_aux = Tensor(rng.standard_normal((4, 3)))
    labels = rng.integers(0, 3, size=4)
    loss, terms = total_loss(y_cls, y_aux, labels, Tensor(np.float64(0.9)),
                             use_reg=False)
    assert terms.reg == 0.0
    assert loss.item() == pytest.approx(0.5 * (terms.cls + terms.aux), rel=1e-10)


def test_sgd_step_matches_momentum_recurrence():
    p = parameter(np.array([1.0, -2.0]), "p", dtype=np.float64)
    opt = SGD({"p": p}, lr=0.1, momentum=0.9)
    g1 = np.array([0.5, -1.0])
    p.grad = g1.copy()
    opt.step()
    v1 = -0.1 * g1
    np.testing.assert_allclose(p.data, np.array([1.0, -2.0]) + v1)
    g2 = np.array([-0.2, 0.3])
    p.grad = g2.copy()
    opt.step()
    v2 = 0.9 * v1 - 0.1 * g2
    np.testing.assert_allclose(p.data, np.array([1.0, -2.0]) + v1 + v2)


def test_sgd_skips_gradless_and_zero_grad_clears():
    p = parameter(np.ones(2), "p", dtype=np.float64)
    q = parameter(np.ones(2), "q", dtype=np.float64)
    opt = SGD({"p": p, "q": q}, lr=0.5, momentum=0.0)
    p.grad = np.ones(2)
    opt.step()
    np.testing.assert_allclose(p.data, [0.5, 0.5])
    np.testing.assert_allclose(q.data, [1.0, 1.0])
    opt.zero_grad()
    assert p.grad is None and q.grad is None


def test_lr_schedule_milestones():
    assert LR_MILESTONES == (20, 40)
    assert lr_at(0.01, 1) == pytest.approx(0.01)
    assert lr_at(0.01, 20) == pytest.approx(0.01)
    assert lr_at(0.01, 21) == pytest.approx(0.001)
    assert lr_at(0.01, 40) == pytest.approx(0.001)
    assert lr_at(0.01, 41) == pytest.approx(0.0001)


def test_mask_downsample_nearest():
    mask = np.zeros((4, 4), dtype=bool)
    mask[2:, 2:] = True
    ds = _mask_downsample(mask, 2, 2)
    np.testing.assert_array_equal(ds, [[False, False], [False, True]])
    # identity when sizes match
    np.testing.assert_array_equal(_mask_downsample(mask, 4, 4), mask)


def test_epoch_line_format():
    line = _epoch_line(3, 0.01, 1.5, 1.2, 1.8, 0.25, 0.5, 0.75)
    assert line == ("epoch 3 lr 0.010000 loss 1.500000 cls 1.200000 "
                    "aux 1.800000 reg 0.250000 train_acc 0.500000 "
                    "val_acc 0.750000")
    assert LINE_RE.match(line)


def test_eval_report_lines():
    rep = EvalReport(top1=0.9375, n_clips=16, in_mask=0.5, chance=0.1,
                     per_frame=np.array([1.0, 2.5]))
    assert rep.lines() == ["top1 0.937500", "clips 16",
                           "keypoint_in_mask 0.500000", "chance 0.100000",
                           "points_per_frame 1.00 2.50"]
    assert EvalReport(top1=0.5, n_clips=2).lines() == ["top1 0.500000",
                                                       "clips 2"]


class _FixedLogits:
    """Stage-1 stand-in returning canned logits per clip index."""

    def __init__(self, logits):
        self.logits = logits
        self.seen = 0

    def forward(self, x):
        b = x.shape[0]
        out = self.logits[self.seen:self.seen + b]
        self.seen += b
        return Tensor(out)


def test_evaluate_model_top1_arithmetic():
    logits = np.eye(4, dtype=np.float32)[[0, 1, 1, 3]]
    clips = ClipBatch(frames=np.zeros((4, 2, 3, 4, 4), np.float32),
                      labels=np.array([0, 1, 2, 3]), masks=None)
    rep = evaluate_model(_FixedLogits(logits), clips, batch=3)
    assert rep.top1 == pytest.approx(0.75)
    assert rep.n_clips == 4
    assert rep.in_mask is None


def _toy_cfg(**kw):
    base = dict(classes=4, clip_len=4, height=16, width=16, side=5, speed=1,
                train_count=8, val_count=4, batch=4, epochs=2, lr=0.01,
                seed=11)
    base.update(kw)
    cfg = TrainConfig(**base)
    cfg.validate()
    return cfg


@pytest.fixture(scope="module")
def toy_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    gen_dataset(str(root), _toy_cfg(seed=5))
    return str(root)


def test_train_stage1_writes_artifacts(toy_data, tmp_path):
    out = str(tmp_path / "run")
    res = train(_toy_cfg(stage=1), toy_data, out)
    assert os.path.exists(res.ckpt_path)
    assert res.epochs_run == 2
    assert len(res.lines) == 2
    for line in res.lines:
        assert LINE_RE.match(line)
        # stage 1 has no aux head or regularizer
        assert "aux 0.000000 reg 0.000000" in line
    with open(res.metrics_path, encoding="utf-8") as f:
        assert f.read() == "".join(line + "\n" for line in res.lines)


def test_train_stage2_requires_stage1(toy_data, tmp_path):
    with pytest.raises(FileNotFoundError):
        train(_toy_cfg(stage=2, epochs=1), toy_data, str(tmp_path / "none"))


def test_train_stage2_reg_column_measured(toy_data, tmp_path):
    out = str(tmp_path / "run")
    train(_toy_cfg(stage=1, epochs=1), toy_data, out)
    res = train(_toy_cfg(stage=2, epochs=1, reg=False), toy_data, out)
    reg = float(res.lines[0].split("reg ")[1].split()[0])
    assert 0.0 < reg <= 1.0      # reported even when not optimized


def test_train_stage1_deterministic(toy_data, tmp_path):
    a = train(_toy_cfg(stage=1), toy_data, str(tmp_path / "a"))
    b = train(_toy_cfg(stage=1), toy_data, str(tmp_path / "b"))
    assert a.lines == b.lines
    with open(a.ckpt_path, "rb") as f:
        blob_a = f.read()
    with open(b.ckpt_path, "rb") as f:
        blob_b = f.read()
    assert blob_a == blob_b


def test_train_early_stop(toy_data, tmp_path):
    # stop_acc 0 disables stopping; a tiny positive threshold stops at
    # min_epochs even though epochs allows more
    cfg = _toy_cfg(stage=1, epochs=4, stop_acc=0.01, min_epochs=2)
    res = train(cfg, toy_data, str(tmp_path / "run"))
    assert res.epochs_run == 2
    assert res.final_val_acc >= 0.01
