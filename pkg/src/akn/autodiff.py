"""Graph introspection and finite-difference gradient verification."""

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .tensor import Tensor, track_kinks


def kink_margin(output: Tensor) -> Optional[float]:
    """Smallest distance to a non-smooth decision boundary recorded anywhere
    in the graph below `output`, or None when nothing recorded one.

    Only populated for graphs built inside a track_kinks() block.
    """
    margins = [n.kink for n in output.topo_order() if n.kink is not None]
    return min(margins) if margins else None


class Graph:
    """A frozen view of the computation below one output tensor."""

    def __init__(self, output: Tensor, params: Optional[Dict[str, Tensor]] = None):
        self.output = output
        self.nodes = output.topo_order()
        self.ids = {id(n): i for i, n in enumerate(self.nodes)}
        if params is None:
            params = {}
            for node in self.nodes:
                if node.requires_grad and node._grad_fn is None:
                    params[node.name or f"param{len(params)}"] = node
        self.params = dict(params)

    @classmethod
    def from_output(cls, output: Tensor, params: Optional[Dict[str, Tensor]] = None) -> "Graph":
        return cls(output, params)

    def backward(self) -> Dict[str, np.ndarray]:
        self.output.backward()
        return {
            name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in self.params.items()
        }

    def kink_margin(self) -> Optional[float]:
        return kink_margin(self.output)

    def op_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for node in self.nodes:
            if node.op is not None:
                counts[node.op] = counts.get(node.op, 0) + 1
        return counts

    def __len__(self):
        return len(self.nodes)


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    worst_coord: int
    analytic: float
    numeric: float


@dataclass
class GradientReport:
    checks: list = field(default_factory=list)
    kink_margin: Optional[float] = None
    tolerance: float = 1e-4

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance

    def __str__(self):
        lines = [
            f"{c.name}: rel err {c.max_rel_err:.3e} at flat index {c.worst_coord} "
            f"(analytic {c.analytic:.6e}, numeric {c.numeric:.6e})"
            for c in self.checks
        ]
        margin = "n/a" if self.kink_margin is None else f"{self.kink_margin:.3e}"
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"kink margin {margin}; {verdict} at tolerance {self.tolerance:.1e}")
        return "\n".join(lines)


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1.0)


def grad_check(build: Callable[[], Tensor],
               params: Dict[str, Tensor],
               tolerance: float = 1e-4,
               step: float = 1e-4,
               probes: int = 10,
               rng: Optional[np.random.Generator] = None) -> GradientReport:
    """Compare backprop gradients against central differences.

    `build` must re-run the forward pass from current parameter values and
    return a scalar Tensor. Parameters are perturbed in place through flat
    views, so they must own contiguous float buffers (parameter() guarantees
    this). Check report.kink_margin before trusting a FAIL: differences
    straddling a relu/max/selection boundary are not meaningful.
    """
    if rng is None:
        rng = np.random.default_rng(0)

    with track_kinks():
        out = build()
    margin = kink_margin(out)
    out.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    report = GradientReport(kink_margin=margin, tolerance=tolerance)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        size = flat.shape[0]
        if size <= probes:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=probes, replace=False)
        aflat = analytic[name].reshape(-1)
        worst = ParamCheck(name=name, max_rel_err=0.0, worst_coord=0,
                           analytic=float(aflat[0]) if size else 0.0, numeric=0.0)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            f_hi = build().item()
            flat[i] = orig - step
            f_lo = build().item()
            flat[i] = orig
            numeric = (f_hi - f_lo) / (2.0 * step)
            err = _rel_err(float(aflat[i]), numeric)
            if err >= worst.max_rel_err:
                worst = ParamCheck(name=name, max_rel_err=err, worst_coord=int(i),
                                   analytic=float(aflat[i]), numeric=numeric)
        report.checks.append(worst)
    return report
