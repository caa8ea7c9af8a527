"""Compare the compiled convolution-lowering lane against the numpy lane.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Prints per-workload timings for both lanes plus the speedup, and verifies
they agree bit-for-bit before timing anything. The compiled lane must be
built (pip install -e .) or the script reports python-vs-python.
"""

import time

import numpy as np

from akn.kernels import BACKEND, pyref

try:
    from akn.kernels import _conv
except ImportError:
    _conv = None

# (label, shape, kernel, stride, pad) for the 2D lowering; the 1D cases
# mirror the point-branch workload after compaction.
CASES_2D = [
    ("stem 32x32", (8, 3, 32, 32), (3, 3), 2, 1),
    ("mid 16x16", (8, 32, 16, 16), (3, 3), 1, 1),
    ("deep 8x8", (8, 96, 8, 8), (3, 3), 2, 1),
]
CASES_1D = [
    ("points n=154", (8, 64, 154), 3, 1, 1),
    ("points n=512", (8, 96, 512), 3, 2, 1),
]


def _time(fn, *args, repeats=20):
    fn(*args)                        # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _bench(label, py_fn, c_fn, args):
    ref = py_fn(*args)
    if c_fn is not None:
        got = c_fn(*args)
        if not np.array_equal(ref, got):
            raise AssertionError(f"{label}: lanes disagree")
    t_py = _time(py_fn, *args)
    t_c = _time(c_fn, *args) if c_fn is not None else float("nan")
    speed = t_py / t_c if c_fn is not None else float("nan")
    print(f"{label:<28} python {t_py * 1e3:8.3f} ms   "
          f"compiled {t_c * 1e3:8.3f} ms   x{speed:5.2f}")


def main():
    rng = np.random.default_rng(0)
    print(f"active backend: {BACKEND}")
    if _conv is None:
        print("compiled lane unavailable; timing the numpy lane only\n")
    for label, shape, (kh, kw), stride, pad in CASES_2D:
        x = rng.standard_normal(shape).astype(np.float32)
        _bench(f"im2col2d {label}", pyref.im2col2d,
               _conv.im2col2d if _conv else None, (x, kh, kw, stride, pad))
        cols = pyref.im2col2d(x, kh, kw, stride, pad)
        _bench(f"col2im2d {label}", pyref.col2im2d,
               _conv.col2im2d if _conv else None,
               (cols, shape[2], shape[3], kh, kw, stride, pad))
    for label, shape, k, stride, pad in CASES_1D:
        x = rng.standard_normal(shape).astype(np.float32)
        _bench(f"im2col1d {label}", pyref.im2col1d,
               _conv.im2col1d if _conv else None, (x, k, stride, pad))
        cols = pyref.im2col1d(x, k, stride, pad)
        _bench(f"col2im1d {label}", pyref.col2im1d,
               _conv.col2im1d if _conv else None,
               (cols, shape[2], k, stride, pad))


if __name__ == "__main__":
    main()
