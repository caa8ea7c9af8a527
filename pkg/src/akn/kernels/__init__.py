"""Convolution lowering kernels with two interchangeable lanes.

The compiled Cython lane is used when available; set AKN_PURE_PYTHON=1 to
force the numpy lane. Both expose the same im2col/col2im surface and are
required to agree bit-for-bit on the same inputs (see tests/test_kernels.py
and benchmarks/bench_kernels.py).
"""

import os

from . import pyref

BACKEND = "python"
_impl = pyref

if not os.environ.get("AKN_PURE_PYTHON"):
    try:
        from . import _conv as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        pass

im2col2d = _impl.im2col2d
col2im2d = _impl.col2im2d
im2col1d = _impl.im2col1d
col2im1d = _impl.col2im1d
out_extent = pyref.out_extent

__all__ = ["BACKEND", "im2col2d", "col2im2d", "im2col1d", "col2im1d", "out_extent", "pyref"]
