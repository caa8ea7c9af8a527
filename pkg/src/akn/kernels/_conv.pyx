# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col/col2im kernels. Same column layout as pyref."""

import numpy as np

cimport cython

ctypedef fused real:
    float
    double


def out_extent(Py_ssize_t size, Py_ssize_t kernel, Py_ssize_t stride, Py_ssize_t pad):
    return (size + 2 * pad - kernel) // stride + 1


@cython.boundscheck(False)
def _im2col2d(real[:, :, :, ::1] x, real[:, :, ::1] out,
              Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t bi, ci, a, b, i, j, row, src_i, src_j
    cdef real v
    for bi in range(n):
        for ci in range(c):
            for a in range(kh):
                for b in range(kw):
                    row = (ci * kh + a) * kw + b
                    for i in range(ho):
                        src_i = i * stride - pad + a
                        if src_i < 0 or src_i >= h:
                            for j in range(wo):
                                out[bi, row, i * wo + j] = 0
                            continue
                        for j in range(wo):
                            src_j = j * stride - pad + b
                            if src_j < 0 or src_j >= w:
                                v = 0
                            else:
                                v = x[bi, ci, src_i, src_j]
                            out[bi, row, i * wo + j] = v
    return 0


@cython.boundscheck(False)
def _col2im2d(real[:, :, ::1] cols, real[:, :, :, ::1] out,
              Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t bi, ci, a, b, i, j, row, src_i, src_j
    for bi in range(n):
        for ci in range(c):
            for a in range(kh):
                for b in range(kw):
                    row = (ci * kh + a) * kw + b
                    for i in range(ho):
                        src_i = i * stride - pad + a
                        if src_i < 0 or src_i >= h:
                            continue
                        for j in range(wo):
                            src_j = j * stride - pad + b
                            if 0 <= src_j < w:
                                out[bi, ci, src_i, src_j] += cols[bi, row, i * wo + j]
    return 0


@cython.boundscheck(False)
def _im2col1d(real[:, :, ::1] x, real[:, :, ::1] out,
              Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], size = x.shape[2]
    cdef Py_ssize_t lo = (size + 2 * pad - k) // stride + 1
    cdef Py_ssize_t bi, ci, a, i, row, src
    cdef real v
    for bi in range(n):
        for ci in range(c):
            for a in range(k):
                row = ci * k + a
                for i in range(lo):
                    src = i * stride - pad + a
                    if src < 0 or src >= size:
                        v = 0
                    else:
                        v = x[bi, ci, src]
                    out[bi, row, i] = v
    return 0


@cython.boundscheck(False)
def _col2im1d(real[:, :, ::1] cols, real[:, :, ::1] out,
              Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], size = out.shape[2]
    cdef Py_ssize_t lo = (size + 2 * pad - k) // stride + 1
    cdef Py_ssize_t bi, ci, a, i, row, src
    for bi in range(n):
        for ci in range(c):
            for a in range(k):
                row = ci * k + a
                for i in range(lo):
                    src = i * stride - pad + a
                    if 0 <= src < size:
                        out[bi, ci, src] += cols[bi, row, i]
    return 0


def im2col2d(x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho = out_extent(h, kh, stride, pad)
    wo = out_extent(w, kw, stride, pad)
    out = np.empty((n, c * kh * kw, ho * wo), dtype=x.dtype)
    _im2col2d(x, out, kh, kw, stride, pad)
    return out


def col2im2d(cols, Py_ssize_t h, Py_ssize_t w, Py_ssize_t kh, Py_ssize_t kw,
             Py_ssize_t stride, Py_ssize_t pad):
    cols = np.ascontiguousarray(cols)
    n = cols.shape[0]
    c = cols.shape[1] // (kh * kw)
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    _col2im2d(cols, out, kh, kw, stride, pad)
    return out


def im2col1d(x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    x = np.ascontiguousarray(x)
    n, c, size = x.shape
    lo = out_extent(size, k, stride, pad)
    out = np.empty((n, c * k, lo), dtype=x.dtype)
    _im2col1d(x, out, k, stride, pad)
    return out


def col2im1d(cols, Py_ssize_t size, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    cols = np.ascontiguousarray(cols)
    n = cols.shape[0]
    c = cols.shape[1] // k
    out = np.zeros((n, c, size), dtype=cols.dtype)
    _col2im1d(cols, out, k, stride, pad)
    return out
