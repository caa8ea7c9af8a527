"""Kernel compaction, the width-constant equivalence it relies on, and the
1D point classifier mirrored from the 2D back stages."""

import numpy as np
import pytest

from akn import ops
from akn.backbone import ResidualBlock
from akn.classifier import (FusionHead, PointBlock, compact_kernel,
                            compact_network, fuse_predict, point_forward)
from akn.errors import ConfigError, ShapeError
from akn.tensor import Tensor, no_grad

from oracles import compact_naive


def test_compact_frozen_example():
    w = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)   # [[1,2,3],[4,5,6],[7,8,9]]
    ck = compact_kernel(w, "width")
    assert np.array_equal(ck.result.data, [[[6.0, 15.0, 24.0]]])


def test_compact_height_axis():
    w = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    ck = compact_kernel(w, "height")
    assert np.array_equal(ck.result.data, [[[12.0, 15.0, 18.0]]])


def test_compact_matches_naive(rng):
    w = rng.standard_normal((4, 3, 3, 3))
    for axis in ("width", "height"):
        got = compact_kernel(w, axis).result.data
        np.testing.assert_allclose(got, compact_naive(w, axis), atol=1e-12)


def test_compact_rejects_bad_input(rng):
    with pytest.raises(ConfigError):
        compact_kernel(rng.standard_normal((2, 2, 3, 3)), "diagonal")
    with pytest.raises(ShapeError):
        compact_kernel(rng.standard_normal((2, 3, 3)))


def test_width_constant_equivalence(rng):
    """A 2D conv of a width-constant image equals the compacted 1D conv of
    one column, repeated across width (interior columns, no padding edge)."""
    cin, cout, h, w = 3, 5, 9, 9
    x_col = rng.standard_normal((1, cin, h))               # one column
    x2d = np.repeat(x_col[:, :, :, None], w, axis=3)       # constant width
    w2d = rng.standard_normal((cout, cin, 3, 3))
    w1d = compact_naive(w2d, "width")
    y2d = ops.conv2d(Tensor(x2d), Tensor(w2d), stride=1, padding=1).data
    y1d = ops.conv1d(Tensor(x_col), Tensor(w1d), stride=1, padding=1).data
    for col in range(1, w - 1):                            # interior only
        np.testing.assert_allclose(y2d[0, :, :, col], y1d[0], atol=1e-9)


def test_width_constant_equivalence_strided(rng):
    cin, cout, h, w = 2, 4, 8, 10
    x_col = rng.standard_normal((1, cin, h))
    x2d = np.repeat(x_col[:, :, :, None], w, axis=3)
    w2d = rng.standard_normal((cout, cin, 3, 3))
    w1d = compact_naive(w2d, "width")
    y2d = ops.conv2d(Tensor(x2d), Tensor(w2d), stride=2, padding=1).data
    y1d = ops.conv1d(Tensor(x_col), Tensor(w1d), stride=2, padding=1).data
    for col in range(1, y2d.shape[3] - 1):
        np.testing.assert_allclose(y2d[0, :, :, col], y1d[0], atol=1e-9)


def _residual_stage(cin, cout, stride, seed=0):
    return ResidualBlock(f"s{seed}", cin, cout, stride=stride,
                         shift_fraction=0.125, rng=np.random.default_rng(seed))


def test_compact_network_mirrors_blocks(rng):
    blocks = [_residual_stage(4, 6, 2, seed=1), _residual_stage(6, 8, 2, seed=2)]
    q = compact_network(blocks)
    assert len(q) == 2
    names = set()
    for blk in q:
        names |= set(blk.params())
    assert all(n.endswith(".1d") for n in names)
    assert "s1.conv1.w.1d" in names and "s2.proj.w.1d" in names
    # compacted weights equal the width-sum of the 2D weights
    got = q[0].params()["s1.conv1.w.1d"].data
    want = compact_naive(blocks[0].params()["s1.conv1.w"].data, "width")
    np.testing.assert_allclose(got, want, atol=1e-6)
    # affine parameters are copied across
    np.testing.assert_allclose(q[1].params()["s2.aff2.scale.1d"].data,
                               blocks[1].params()["s2.aff2.scale"].data)


def test_point_block_forward_shapes(rng):
    blocks = [_residual_stage(4, 6, 2, seed=3)]
    q = compact_network(blocks)
    x = Tensor(rng.standard_normal((2, 4, 11)).astype(np.float32))
    with no_grad():
        y = point_forward(q, x)
    assert y.shape == (2, 6, 6)                    # stride 2: ceil(11/2)


def test_point_block_stride_one_keeps_length(rng):
    blocks = [_residual_stage(5, 5, 1, seed=4)]
    q = compact_network(blocks)
    x = Tensor(rng.standard_normal((1, 5, 9)).astype(np.float32))
    with no_grad():
        y = point_forward(q, x)
    assert y.shape == (1, 5, 9)


def test_compact_network_keep_coords_widens_first_block(rng):
    blocks = [_residual_stage(4, 6, 2, seed=5)]
    q = compact_network(blocks, keep_coords=True)
    w = q[0].params()["s5.conv1.w.1d"]
    assert w.shape == (6, 7, 3)                     # 4 + 3 coordinate channels
    # the widened channels start at zero: same output as without coords
    x = rng.standard_normal((1, 4, 8)).astype(np.float32)
    coords = rng.standard_normal((1, 3, 8)).astype(np.float32)
    xc = Tensor(np.concatenate([x, coords], axis=1))
    with no_grad():
        y_wide = point_forward(q, xc)
        y_base = point_forward(compact_network(blocks), Tensor(x))
    np.testing.assert_allclose(y_wide.data, y_base.data, atol=1e-6)


def test_compact_network_rejects_non_blocks():
    with pytest.raises(ConfigError):
        compact_network([object()])


def test_fusion_head(rng):
    head = FusionHead(10, 4, rng=np.random.default_rng(0))
    x_l = Tensor(rng.standard_normal((2, 6, 3, 4, 4)).astype(np.float32))
    e_f = Tensor(rng.standard_normal((2, 4, 7)).astype(np.float32))
    with no_grad():
        y = fuse_predict(x_l, e_f, head.w, head.b, True)
    assert y.shape == (2, 4)
    # concat off: only the point embedding feeds the classifier
    head2 = FusionHead(4, 4, rng=np.random.default_rng(0))
    with no_grad():
        y2 = fuse_predict(None, e_f, head2.w, head2.b, False)
    assert y2.shape == (2, 4)


def test_fuse_predict_is_mean_concat_dense(rng):
    head = FusionHead(5, 3, rng=np.random.default_rng(1))
    x_l = rng.standard_normal((1, 2, 2, 3, 3)).astype(np.float32)
    e_f = rng.standard_normal((1, 3, 4)).astype(np.float32)
    with no_grad():
        y = fuse_predict(Tensor(x_l), Tensor(e_f), head.w, head.b, True)
    feats = np.concatenate([x_l.mean(axis=(2, 3, 4)), e_f.mean(axis=2)], axis=1)
    want = feats @ head.w.data.T + head.b.data
    np.testing.assert_allclose(y.data, want, atol=1e-5)
