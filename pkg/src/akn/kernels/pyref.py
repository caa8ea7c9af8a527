"""Pure numpy im2col/col2im kernels (fallback lane).

Column layout matches the compiled lane: row index (c * kh + a) * kw + b for
channel c and kernel offset (a, b), so a (Cout, Cin, kh, kw) weight reshaped
to (Cout, Cin*kh*kw) lines up with the columns.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def out_extent(size, kernel, stride, pad):
    """Output length of a convolution along one axis."""
    return (size + 2 * pad - kernel) // stride + 1


def im2col2d(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    ho = out_extent(h, kh, stride, pad)
    wo = out_extent(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (n, c, ho, wo, kh, kw) -> (n, c*kh*kw, ho*wo)
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * kh * kw, ho * wo)


def col2im2d(cols, h, w, kh, kw, stride, pad):
    n = cols.shape[0]
    c = cols.shape[1] // (kh * kw)
    ho = out_extent(h, kh, stride, pad)
    wo = out_extent(w, kw, stride, pad)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    grid = cols.reshape(n, c, kh, kw, ho, wo)
    for a in range(kh):
        for b in range(kw):
            xp[:, :, a : a + stride * ho : stride, b : b + stride * wo : stride] += grid[:, :, a, b]
    if pad:
        return np.ascontiguousarray(xp[:, :, pad : pad + h, pad : pad + w])
    return xp


def im2col1d(x, k, stride, pad):
    n, c, size = x.shape
    lo = out_extent(size, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(x, k, axis=2)[:, :, ::stride]
    # (n, c, lo, k) -> (n, c*k, lo)
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(n, c * k, lo)


def col2im1d(cols, size, k, stride, pad):
    n = cols.shape[0]
    c = cols.shape[1] // k
    lo = out_extent(size, k, stride, pad)
    xp = np.zeros((n, c, size + 2 * pad), dtype=cols.dtype)
    grid = cols.reshape(n, c, k, lo)
    for a in range(k):
        xp[:, :, a : a + stride * lo : stride] += grid[:, :, a]
    if pad:
        return np.ascontiguousarray(xp[:, :, pad : pad + size])
    return xp
