"""Central-difference gradient checks for every differentiable op family.

Ops with kinks (relu, max/min reductions) report a margin: the smallest
distance from any input to the nearest nondifferentiable point.  When a
random draw lands too close (margin < 1e-3) the check is resampled rather
than trusted, since finite differences straddle the kink there.
"""

import numpy as np
import pytest

from akn import ops
from akn.autodiff import Graph, grad_check, kink_margin
from akn.errors import GraphError
from akn.tensor import Tensor, parameter, track_kinks

TOL = 1e-4
MARGIN = 1e-3
RESAMPLE_TRIES = 8


def P(data, name):
    # float64: central differences at step 1e-4 drown in float32 rounding
    return parameter(data, name, dtype=np.float64)


def checked(build_from_rng, names, seed=0, tol=TOL):
    """Run grad_check, resampling the inputs while the kink margin is tiny."""
    last = None
    for trial in range(RESAMPLE_TRIES):
        rng = np.random.default_rng(seed + 1000 * trial)
        build, params = build_from_rng(rng)
        report = grad_check(build, params, tolerance=tol, rng=np.random.default_rng(trial))
        last = report
        if report.kink_margin is None or report.kink_margin >= MARGIN:
            assert report.passed, str(report)
            return report
    raise AssertionError(f"kink margin stayed below {MARGIN}: {last}")


def _simple(shape_fn):
    def wrap(rng):
        params = {n: parameter(a, n) for n, a in shape_fn(rng).items()}

        def build():
            return None

        return build, params

    return wrap


def test_grad_elementwise():
    def factory(rng):
        a = P(rng.standard_normal((3, 4)), "a")
        b = P(rng.standard_normal((3, 4)), "b")

        def build():
            return ops.tensor_sum(ops.mul(ops.add(a, b), ops.sub(a, ops.div(b, 2.0))))

        return build, {"a": a, "b": b}

    checked(factory, ("a", "b"))


def test_grad_broadcasting():
    def factory(rng):
        a = P(rng.standard_normal((3, 4)), "a")
        b = P(rng.standard_normal((1, 4)), "b")
        c = P(rng.standard_normal(()), "c")

        def build():
            return ops.tensor_sum(ops.mul(ops.add(a, b), c))

        return build, {"a": a, "b": b, "c": c}

    checked(factory, ("a", "b", "c"))


def test_grad_matmul_dense():
    def factory(rng):
        x = P(rng.standard_normal((5, 3)), "x")
        w = P(rng.standard_normal((2, 3)), "w")
        b = P(rng.standard_normal(2), "b")

        def build():
            return ops.tensor_sum(ops.dense(x, w, b))

        return build, {"x": x, "w": w, "b": b}

    checked(factory, ("x", "w", "b"))


def test_grad_conv2d():
    def factory(rng):
        x = P(rng.standard_normal((2, 3, 6, 5)), "x")
        w = P(rng.standard_normal((4, 3, 3, 3)), "w")

        def build():
            y = ops.conv2d(x, w, stride=2, padding=1)
            return ops.tensor_sum(ops.mul(y, y))

        return build, {"x": x, "w": w}

    checked(factory, ("x", "w"))


def test_grad_conv1d():
    def factory(rng):
        x = P(rng.standard_normal((2, 3, 9)), "x")
        w = P(rng.standard_normal((4, 3, 3)), "w")

        def build():
            y = ops.conv1d(x, w, stride=2, padding=1)
            return ops.tensor_sum(ops.mul(y, y))

        return build, {"x": x, "w": w}

    checked(factory, ("x", "w"))


def test_grad_relu_with_margin():
    def factory(rng):
        x = P(rng.standard_normal((4, 4)), "x")

        def build():
            return ops.tensor_sum(ops.relu(x))

        return build, {"x": x}

    report = checked(factory, ("x",))
    assert report.kink_margin is not None


def test_grad_softmax_logsoftmax():
    def factory(rng):
        x = P(rng.standard_normal((3, 5)), "x")
        t = rng.standard_normal((3, 5))

        def build():
            return ops.tensor_sum(ops.mul(ops.log_softmax(x, axis=-1), Tensor(t)))

        return build, {"x": x}

    checked(factory, ("x",))

    def factory2(rng):
        x = P(rng.standard_normal((3, 5)), "x")
        t = rng.standard_normal((3, 5))

        def build():
            return ops.tensor_sum(ops.mul(ops.softmax(x, axis=-1), Tensor(t)))

        return build, {"x": x}

    checked(factory2, ("x",))


def test_grad_reductions():
    def factory(rng):
        x = P(rng.standard_normal((3, 6)), "x")

        def build():
            hi = ops.reduce_max(x, axis=1)
            lo = ops.reduce_min(x, axis=0)
            return ops.add(ops.tensor_sum(hi), ops.tensor_sum(ops.mul(lo, lo)))

        return build, {"x": x}

    report = checked(factory, ("x",))
    assert report.kink_margin is not None


def test_grad_mean_keepdims():
    def factory(rng):
        x = P(rng.standard_normal((2, 3, 4)), "x")

        def build():
            m = ops.mean(x, axis=(0, 2), keepdims=True)
            return ops.tensor_sum(ops.mul(m, m))

        return build, {"x": x}

    checked(factory, ("x",))


def test_grad_structural():
    def factory(rng):
        a = P(rng.standard_normal((2, 3)), "a")
        b = P(rng.standard_normal((2, 2)), "b")

        def build():
            cat = ops.concat([a, b], axis=1)
            t = ops.transpose(cat, (1, 0))
            r = ops.reshape(t, (10,))
            cut = ops.narrow(r, 0, 2, 6)
            return ops.tensor_sum(ops.mul(cut, cut))

        return build, {"a": a, "b": b}

    checked(factory, ("a", "b"))


def test_grad_take_points():
    def factory(rng):
        x = P(rng.standard_normal((2, 3, 7)), "x")
        idx = rng.integers(0, 7, size=(2, 4))

        def build():
            y = ops.take_points(x, idx)
            return ops.tensor_sum(ops.mul(y, y))

        return build, {"x": x}

    checked(factory, ("x",))


def test_grad_take_points_repeated_index_accumulates():
    x = P(np.ones((1, 1, 3)), "x")
    idx = np.array([[1, 1, 1]])
    y = ops.tensor_sum(ops.take_points(x, idx))
    y.backward()
    assert np.array_equal(x.grad, [[[0.0, 3.0, 0.0]]])


def test_grad_temporal_shift():
    def factory(rng):
        x = P(rng.standard_normal((2, 4, 8, 2, 2)), "x")

        def build():
            y = ops.temporal_shift(x, 0.25, time_axis=1, channel_axis=2)
            return ops.tensor_sum(ops.mul(y, y))

        return build, {"x": x}

    checked(factory, ("x",))


def test_grad_channel_affine():
    def factory(rng):
        x = P(rng.standard_normal((2, 3, 4, 4)), "x")
        s = P(rng.standard_normal(3), "s")
        o = P(rng.standard_normal(3), "o")

        def build():
            y = ops.channel_affine(x, s, o, axis=1)
            return ops.tensor_sum(ops.mul(y, y))

        return build, {"x": x, "s": s, "o": o}

    checked(factory, ("x", "s", "o"))


def test_graph_collects_named_leaves():
    a = P(np.ones((2, 2)), "a")
    b = P(np.full((2, 2), 3.0), "b")
    out = ops.tensor_sum(ops.mul(a, b))
    g = Graph(out)
    grads = g.backward()
    assert set(grads) == {"a", "b"}
    assert np.array_equal(grads["a"], np.full((2, 2), 3.0))
    assert np.array_equal(grads["b"], np.ones((2, 2)))


def test_graph_zero_for_unreached_param():
    a = P(np.ones(3), "a")
    b = P(np.ones(3), "b")
    out = ops.tensor_sum(a)
    grads = Graph(out, params={"a": a, "b": b}).backward()
    assert np.array_equal(grads["b"], np.zeros(3))


def test_kink_margin_tracks_relu():
    x = P(np.array([0.5, -0.2, 2.0]), "x")
    with track_kinks():
        y = ops.tensor_sum(ops.relu(x))
    assert kink_margin(y) == pytest.approx(0.2)


def test_kink_margin_tracks_max_gap():
    x = P(np.array([[1.0, 3.0, 2.5]]), "x")
    with track_kinks():
        y = ops.tensor_sum(ops.reduce_max(x, axis=1))
    assert kink_margin(y) == pytest.approx(0.5)


def test_backward_rejects_vector_output():
    x = P(np.ones(3), "x")
    with pytest.raises(GraphError):
        ops.mul(x, x).backward()


def test_grad_accumulates_across_reuse():
    x = P(np.array([2.0]), "x")
    y = ops.tensor_sum(ops.add(ops.mul(x, x), ops.mul(x, x)))
    y.backward()
    assert x.grad == pytest.approx(8.0)
