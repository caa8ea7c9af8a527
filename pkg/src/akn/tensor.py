"""Dense n-dimensional tensor with reverse-mode differentiation.

Values are numpy arrays (float32 for training and storage, float64 for
gradient checks); the flat buffer is row-major with the last dimension
fastest. Operations in akn.ops record parents and a gradient closure on the
result, so calling backward() on a scalar output fills .grad on every
reachable tensor that requires it. Tensors taking part in a graph are treated
as immutable; the optimizer swaps parameter buffers only between steps.
"""

from contextlib import contextmanager

import numpy as np

from .errors import GraphError

_GRAD_ENABLED = True
_KINK_TRACKING = False


@contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation fast path)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextmanager
def track_kinks():
    """Record distance-to-nondifferentiability margins on kinked ops.

    Used by finite-difference checks to reject sample points where a relu,
    max, or min sits too close to a decision boundary.
    """
    global _KINK_TRACKING
    prev = _KINK_TRACKING
    _KINK_TRACKING = True
    try:
        yield
    finally:
        _KINK_TRACKING = prev


def grad_enabled():
    return _GRAD_ENABLED


def kink_tracking():
    return _KINK_TRACKING


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_grad_fn", "kink")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents = ()
        self._grad_fn = None
        self.kink = None

    # -- introspection ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" op={self.op}" if self.op != "leaf" else ""
        name = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag}{name})"

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype):
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    # -- autodiff ----------------------------------------------------------
    def topo_order(self):
        """All reachable nodes, every parent before its consumers."""
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def backward(self):
        """Accumulate d(self)/d(leaf) into .grad over the whole graph."""
        if self.data.size != 1:
            raise GraphError(f"backward needs a scalar output, got shape {self.data.shape}")
        order = self.topo_order()
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._grad_fn is None or node.grad is None:
                continue
            for parent, grad in zip(node._parents, node._grad_fn(node.grad)):
                if grad is None:
                    continue
                if not (parent.requires_grad or parent._grad_fn is not None):
                    continue
                if parent.grad is None:
                    parent.grad = grad
                else:
                    parent.grad = parent.grad + grad
            if not node.requires_grad:
                node.grad = None  # free intermediates early


def parameter(data, name=None, dtype=np.float32):
    """Trainable leaf tensor with a contiguous buffer."""
    return Tensor(np.ascontiguousarray(data, dtype=dtype), requires_grad=True, name=name)


def from_op(data, parents, grad_fn, op, kink=None):
    """Wrap an op result; skips graph recording when gradients are off."""
    out = Tensor(data)
    needs = _GRAD_ENABLED and any(p.requires_grad or p._grad_fn is not None for p in parents)
    if needs:
        out.op = op
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    if _KINK_TRACKING and kink is not None:
        out.kink = float(kink)
        out.op = op
    return out
