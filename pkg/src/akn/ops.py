"""Differentiable operations over akn.tensor.Tensor.

Each function computes the forward value with numpy and registers a closure
producing the parent gradients. Convolutions lower to im2col + GEMM through
akn.kernels, so they use whichever lane (compiled or numpy) is active.
"""

import numpy as np

from . import kernels as K
from .errors import ShapeError
from .tensor import Tensor, from_op


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(grad, shape):
    """Sum a broadcasted gradient back down to the original shape."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- arithmetic -------------------------------------------------------------

def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.data + b.data

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return from_op(out, (a, b), grad_fn, "add")


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.data - b.data

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return from_op(out, (a, b), grad_fn, "sub")


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.data * b.data

    def grad_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return from_op(out, (a, b), grad_fn, "mul")


elementwise_mul = mul


def div(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.data / b.data

    def grad_fn(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return from_op(out, (a, b), grad_fn, "div")


def neg(a):
    a = _as_tensor(a)
    return from_op(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.ndim}-d and {b.ndim}-d")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape[-1]} vs {b.shape[-2]}")
    out = a.data @ b.data

    def grad_fn(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return from_op(out, (a, b), grad_fn, "matmul")


# -- dense / convolution -----------------------------------------------------

def dense(x, w, b=None):
    """y = x @ w.T + b for x (..., Din), w (Dout, Din), b (Dout,)."""
    x = _as_tensor(x)
    w = _as_tensor(w)
    if w.ndim != 2:
        raise ShapeError(f"dense weight must be 2-d (Dout, Din), got {w.ndim}-d")
    din = w.shape[1]
    if x.shape[-1] != din:
        raise ShapeError(f"dense input feature dim {x.shape[-1]} != weight in dim {din}")
    out = x.data @ w.data.T
    parents = [x, w]
    if b is not None:
        b = _as_tensor(b, x)
        if b.shape != (w.shape[0],):
            raise ShapeError(f"dense bias shape {b.shape} != ({w.shape[0]},)")
        out = out + b.data
        parents.append(b)

    def grad_fn(g):
        gl = g.reshape(-1, w.shape[0])
        xl = x.data.reshape(-1, din)
        gx = (g @ w.data).reshape(x.shape)
        gw = gl.T @ xl
        if b is None:
            return gx, gw
        return gx, gw, gl.sum(axis=0)

    return from_op(out, tuple(parents), grad_fn, "dense")


def _conv_checks(stride, padding):
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}")


def conv2d(x, w, stride=1, padding=1):
    """Cross-correlation of (N, Cin, H, W) (or unbatched (Cin, H, W)) with
    (Cout, Cin, kh, kw); no kernel flip."""
    x = _as_tensor(x)
    w = _as_tensor(w)
    _conv_checks(stride, padding)
    if w.ndim != 4:
        raise ShapeError(f"conv2d weight must be 4-d (Cout, Cin, kh, kw), got {w.ndim}-d")
    cout, cin, kh, kw = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    squeeze = x.ndim == 3
    if x.ndim not in (3, 4):
        raise ShapeError(f"conv2d input must be (Cin, H, W) or (N, Cin, H, W), got {x.ndim}-d")
    xd = x.data[None] if squeeze else x.data
    n, c, h, win = xd.shape
    if c != cin:
        raise ShapeError(f"conv2d input channel dim {c} != weight in_channels {cin}")
    ho = K.out_extent(h, kh, stride, padding)
    wo = K.out_extent(win, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output extent empty for input {h}x{win}, kernel {kh}x{kw}")
    cols = K.im2col2d(xd, kh, kw, stride, padding)
    w2 = w.data.reshape(cout, cin * kh * kw)
    out = np.matmul(w2, cols).reshape(n, cout, ho, wo)
    if squeeze:
        out = out[0]

    def grad_fn(g):
        g3 = (g[None] if squeeze else g).reshape(n, cout, ho * wo)
        gw = np.tensordot(g3, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        gcols = np.matmul(w2.T, g3)
        gx = K.col2im2d(gcols, h, win, kh, kw, stride, padding)
        return (gx[0] if squeeze else gx), gw

    return from_op(out, (x, w), grad_fn, "conv2d")


def conv1d(x, w, stride=1, padding=1):
    """1-d cross-correlation of (N, Cin, L) (or (Cin, L)) with (Cout, Cin, k)."""
    x = _as_tensor(x)
    w = _as_tensor(w)
    _conv_checks(stride, padding)
    if w.ndim != 3:
        raise ShapeError(f"conv1d weight must be 3-d (Cout, Cin, k), got {w.ndim}-d")
    cout, cin, k = w.shape
    squeeze = x.ndim == 2
    if x.ndim not in (2, 3):
        raise ShapeError(f"conv1d input must be (Cin, L) or (N, Cin, L), got {x.ndim}-d")
    xd = x.data[None] if squeeze else x.data
    n, c, size = xd.shape
    if c != cin:
        raise ShapeError(f"conv1d input channel dim {c} != weight in_channels {cin}")
    lo = K.out_extent(size, k, stride, padding)
    if lo < 1:
        raise ShapeError(f"conv1d output extent empty for length {size}, kernel {k}")
    if k == 1 and stride == 1 and padding == 0:
        cols = xd  # kernel covers a single element; columns are the input itself
    else:
        cols = K.im2col1d(xd, k, stride, padding)
    w2 = w.data.reshape(cout, cin * k)
    out = np.matmul(w2, cols)
    if squeeze:
        out = out[0]

    def grad_fn(g):
        g3 = (g[None] if squeeze else g).reshape(n, cout, lo)
        gw = np.tensordot(g3, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        gcols = np.matmul(w2.T, g3)
        if k == 1 and stride == 1 and padding == 0:
            gx = gcols
        else:
            gx = K.col2im1d(gcols, size, k, stride, padding)
        return (gx[0] if squeeze else gx), gw

    return from_op(out, (x, w), grad_fn, "conv1d")


# -- nonlinearities and normalizers ------------------------------------------

def relu(x):
    x = _as_tensor(x)
    out = np.maximum(x.data, 0)
    kink = float(np.abs(x.data).min()) if x.data.size else None

    def grad_fn(g):
        return (g * (x.data > 0),)

    return from_op(out, (x,), grad_fn, "relu", kink=kink)


def softmax(x, axis=-1):
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return from_op(y, (x,), grad_fn, "softmax")


def log_softmax(x, axis=-1):
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def grad_fn(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return from_op(out, (x,), grad_fn, "log_softmax")


# -- reductions ---------------------------------------------------------------

def _reduce_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def tensor_sum(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    axes = _reduce_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)
    kept = x.data.sum(axis=axes, keepdims=True).shape

    def grad_fn(g):
        return (np.broadcast_to(g.reshape(kept), x.shape).copy(),)

    return from_op(out, (x,), grad_fn, "sum")


def mean(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    axes = _reduce_axes(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.shape[a]
    out = x.data.mean(axis=axes, keepdims=keepdims)
    kept = x.data.sum(axis=axes, keepdims=True).shape

    def grad_fn(g):
        return (np.broadcast_to(g.reshape(kept) / count, x.shape).copy(),)

    return from_op(out, (x,), grad_fn, "mean")


def global_avg_pool(x, axis):
    """Mean over the given axes; the standard spatial(-temporal) pooling."""
    return mean(x, axis=axis)


def reduce_max(x, axis, keepdims=False):
    x = _as_tensor(x)
    axis = axis % x.ndim
    out_kept = x.data.max(axis=axis, keepdims=True)
    idx = np.expand_dims(x.data.argmax(axis=axis), axis)
    kink = None
    if x.data.shape[axis] > 1:
        second = np.partition(x.data, -2, axis=axis).take([-2], axis=axis)
        kink = float((out_kept - second).min())

    def grad_fn(g):
        mask = np.zeros_like(x.data)
        np.put_along_axis(mask, idx, 1, axis=axis)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (mask * gk,)

    out = out_kept if keepdims else np.squeeze(out_kept, axis=axis)
    return from_op(out, (x,), grad_fn, "reduce_max", kink=kink)


def reduce_min(x, axis, keepdims=False):
    x = _as_tensor(x)
    axis = axis % x.ndim
    out_kept = x.data.min(axis=axis, keepdims=True)
    idx = np.expand_dims(x.data.argmin(axis=axis), axis)
    kink = None
    if x.data.shape[axis] > 1:
        second = np.partition(x.data, 1, axis=axis).take([1], axis=axis)
        kink = float((second - out_kept).min())

    def grad_fn(g):
        mask = np.zeros_like(x.data)
        np.put_along_axis(mask, idx, 1, axis=axis)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (mask * gk,)

    out = out_kept if keepdims else np.squeeze(out_kept, axis=axis)
    return from_op(out, (x,), grad_fn, "reduce_min", kink=kink)


# -- shape manipulation --------------------------------------------------------

def reshape(x, shape):
    x = _as_tensor(x)
    out = x.data.reshape(shape)

    def grad_fn(g):
        return (g.reshape(x.shape),)

    return from_op(out, (x,), grad_fn, "reshape")


def transpose(x, axes=None):
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = np.argsort(axes)
    out = x.data.transpose(axes)

    def grad_fn(g):
        return (g.transpose(inverse),)

    return from_op(out, (x,), grad_fn, "transpose")


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return from_op(out, tuple(tensors), grad_fn, "concat")


def narrow(x, axis, start, length):
    """Contiguous slice [start, start+length) along one axis."""
    x = _as_tensor(x)
    axis = axis % x.ndim
    if start < 0 or start + length > x.shape[axis]:
        raise ShapeError(f"narrow range [{start}, {start + length}) exceeds axis size {x.shape[axis]}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = x.data[index]

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return from_op(out, (x,), grad_fn, "narrow")


# -- gathers and video-specific ops ---------------------------------------------

def take_points(x, index):
    """Gather columns: x (B, C, L), index (B, N) int -> (B, C, N).

    The index array is treated as constant; gradients scatter-add back into x.
    """
    x = _as_tensor(x)
    index = np.asarray(index)
    if x.ndim != 3 or index.ndim != 2 or index.shape[0] != x.shape[0]:
        raise ShapeError(f"take_points needs x (B, C, L) and index (B, N), got {x.shape} and {index.shape}")
    b, c, _ = x.shape
    bi = np.arange(b)[:, None, None]
    ci = np.arange(c)[None, :, None]
    pi = index[:, None, :]
    out = x.data[bi, ci, pi]

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (bi, ci, pi), g)
        return (gx,)

    return from_op(out, (x,), grad_fn, "take_points")


def _block_index(ndim, time_axis, channel_axis, tslice, cslice):
    index = [slice(None)] * ndim
    index[time_axis] = tslice
    index[channel_axis] = cslice
    return tuple(index)


def temporal_shift(x, fraction, time_axis, channel_axis):
    """Shift the first channel fold one frame forward, the second fold one
    frame back, zero-filling at the clip edges; remaining channels pass through.
    """
    x = _as_tensor(x)
    if not 0 <= fraction <= 0.5:
        raise ShapeError(f"shift fraction must be in [0, 0.5], got {fraction}")
    channels = x.shape[channel_axis]
    fold = int(fraction * channels)
    if fold == 0:
        return x
    nd = x.ndim
    c0 = slice(0, fold)
    c1 = slice(fold, 2 * fold)
    # per fold: (dst, src, zero edge of the output, zero edge of the gradient)
    # The gradient edge sits at the opposite end: the frame whose features
    # fall off the clip influences nothing downstream.
    fwd = [
        (_block_index(nd, time_axis, channel_axis, slice(1, None), c0),
         _block_index(nd, time_axis, channel_axis, slice(0, -1), c0),
         _block_index(nd, time_axis, channel_axis, slice(0, 1), c0),
         _block_index(nd, time_axis, channel_axis, slice(-1, None), c0)),
        (_block_index(nd, time_axis, channel_axis, slice(0, -1), c1),
         _block_index(nd, time_axis, channel_axis, slice(1, None), c1),
         _block_index(nd, time_axis, channel_axis, slice(-1, None), c1),
         _block_index(nd, time_axis, channel_axis, slice(0, 1), c1)),
    ]
    out = x.data.copy()
    for dst, src, out_edge, _ in fwd:
        out[dst] = x.data[src]
        out[out_edge] = 0

    def grad_fn(g):
        gx = g.copy()
        for dst, src, _, grad_edge in fwd:
            gx[src] = g[dst]
            gx[grad_edge] = 0
        return (gx,)

    return from_op(out, (x,), grad_fn, "temporal_shift")


def channel_affine(x, scale, offset, axis=0):
    """Per-channel y = scale * x + offset along the given axis (frozen-stats
    normalization layer)."""
    x = _as_tensor(x)
    scale = _as_tensor(scale, x)
    offset = _as_tensor(offset, x)
    channels = x.shape[axis % x.ndim]
    if scale.shape != (channels,) or offset.shape != (channels,):
        raise ShapeError(
            f"channel_affine needs ({channels},) scale/offset for axis {axis}, "
            f"got {scale.shape} and {offset.shape}")
    bshape = [1] * x.ndim
    bshape[axis % x.ndim] = channels
    return add(mul(x, reshape(scale, bshape)), reshape(offset, bshape))


# -- operator sugar on Tensor -----------------------------------------------------

Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
Tensor.sum = tensor_sum
Tensor.mean = mean
Tensor.reshape = reshape
Tensor.transpose = transpose
