"""Analytical parameter and FLOPs accounting.

Four operator kinds: conv3d, conv2p1d, conv2d over a T x H x W grid, and
conv1d_points over N selected points (dense layers are conv1d_points with
kernel 1). One unit per weight-input product; biases and activations are not
counted. Point counts are kept as exact rationals (alpha times the grid size
at each depth) so branch ratios are exact; per-line integer displays round
half-up once, and totals sum the displayed integers.
"""

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import List, Optional, Sequence, Union

from .backbone import DEFAULT_CHANNELS, DEFAULT_STRIDES
from .config import TrainConfig
from .errors import ConfigError
from .kernels import out_extent

KINDS = ("conv3d", "conv2p1d", "conv2d", "conv1d_points")

Number = Union[int, float, Fraction]


def _round_half_up(x: Fraction) -> int:
    return (2 * x.numerator + x.denominator) // (2 * x.denominator)


@dataclass
class OpCost:
    kind: str
    cin: int
    cout: int
    ks: int = 0
    kt: int = 0
    kp: int = 0
    t: int = 0
    h: int = 0
    w: int = 0
    n: Optional[Fraction] = None
    params: int = 0
    flops: int = 0
    flops_exact: Fraction = Fraction(0)


def _require_positive(kind, **dims):
    for name, v in dims.items():
        if v <= 0:
            raise ConfigError(f"{kind} cost needs positive {name}, got {v}")


def op_cost(kind: str, cin: int, cout: int, ks: int = 0, kt: int = 0,
            kp: int = 0, t: int = 0, h: int = 0, w: int = 0,
            n: Optional[Number] = None) -> OpCost:
    if kind not in KINDS:
        raise ConfigError(f"unknown op kind {kind!r}; expected one of {KINDS}")
    if kind == "conv3d":
        _require_positive(kind, cin=cin, cout=cout, ks=ks, kt=kt, t=t, h=h, w=w)
        params = cin * cout * ks * ks * kt
        flops = Fraction(params * t * h * w)
    elif kind == "conv2p1d":
        _require_positive(kind, cin=cin, cout=cout, ks=ks, kt=kt, t=t, h=h, w=w)
        params = cin * cout * (ks * ks + kt)
        flops = Fraction(params * t * h * w)
    elif kind == "conv2d":
        _require_positive(kind, cin=cin, cout=cout, ks=ks, t=t, h=h, w=w)
        params = cin * cout * ks * ks
        flops = Fraction(params * t * h * w)
    else:
        if n is None:
            raise ConfigError("conv1d_points cost needs a point count n")
        n = Fraction(n)
        _require_positive(kind, cin=cin, cout=cout, kp=kp)
        if n <= 0:
            raise ConfigError(f"conv1d_points cost needs positive n, got {n}")
        params = cin * cout * kp
        flops = params * n
    return OpCost(kind=kind, cin=cin, cout=cout, ks=ks, kt=kt, kp=kp,
                  t=t, h=h, w=w, n=Fraction(n) if n is not None else None,
                  params=params, flops=_round_half_up(flops), flops_exact=flops)


@dataclass
class CostLine:
    name: str
    branch: str
    cost: OpCost


OURS_BRANCHES = ("front", "heatmap_head", "point_branch", "aux_head")


@dataclass
class CostReport:
    lines: List[CostLine]

    def branch_lines(self, branch: str) -> List[CostLine]:
        return [l for l in self.lines if l.branch == branch]

    def branch_params(self, branch: str) -> int:
        return sum(l.cost.params for l in self.branch_lines(branch))

    def branch_flops(self, branch: str) -> int:
        return sum(l.cost.flops for l in self.branch_lines(branch))

    def branch_flops_exact(self, branch: str) -> Fraction:
        return sum((l.cost.flops_exact for l in self.branch_lines(branch)), Fraction(0))

    @property
    def ours_params(self) -> int:
        return sum(self.branch_params(b) for b in OURS_BRANCHES)

    @property
    def ours_flops(self) -> int:
        return sum(self.branch_flops(b) for b in OURS_BRANCHES)

    @property
    def baseline_params(self) -> int:
        return self.branch_params("front") + self.branch_params("baseline_back")

    @property
    def baseline_flops(self) -> int:
        return self.branch_flops("front") + self.branch_flops("baseline_back")

    @property
    def reduction_ratio(self) -> float:
        return 1.0 - self.ours_flops / self.baseline_flops

    @property
    def backend_reduction(self) -> float:
        """Flops cut in the classifier path that replaces the back sub-network
        (transform + 1D blocks + fusion fc vs 2D back blocks + stage-1 fc).
        The auxiliary head is an add-on supervision module, itemized apart."""
        return 1.0 - self.branch_flops("point_branch") / self.branch_flops("baseline_back")


def _stage_geometry(cfg: TrainConfig, channels: Sequence[int],
                    strides: Sequence[int]):
    """Per stage: (name, cin, cout, stride, h_out, w_out)."""
    from .backbone import STAGE_NAMES
    h, w = cfg.height, cfg.width
    cin = 3
    rows = []
    for name, cout, stride in zip(STAGE_NAMES, channels, strides):
        h = out_extent(h, 3, stride, 1)
        w = out_extent(w, 3, stride, 1)
        rows.append((name, cin, cout, stride, h, w))
        cin = cout
    return rows


def network_cost(cfg: TrainConfig, channels: Sequence[int] = DEFAULT_CHANNELS,
                 strides: Sequence[int] = DEFAULT_STRIDES) -> CostReport:
    from .backbone import STAGE_NAMES
    if cfg.split not in STAGE_NAMES[:len(channels)]:
        raise ConfigError(f"split {cfg.split!r} outside backbone stages")
    geo = _stage_geometry(cfg, channels, strides)
    split_idx = [g[0] for g in geo].index(cfg.split)
    if split_idx == len(geo) - 1:
        raise ConfigError(f"split at {cfg.split} leaves no back sub-network")
    t = cfg.clip_len
    k = cfg.classes
    alpha = Fraction(cfg.alpha)
    lines: List[CostLine] = []

    def conv_lines(branch, name, cin, cout, stride, h, w):
        lines.append(CostLine(f"{name}.conv1", branch,
                              op_cost("conv2d", cin, cout, ks=3, t=t, h=h, w=w)))
        lines.append(CostLine(f"{name}.conv2", branch,
                              op_cost("conv2d", cout, cout, ks=3, t=t, h=h, w=w)))
        lines.append(CostLine(f"{name}.proj", branch,
                              op_cost("conv2d", cin, cout, ks=1, t=t, h=h, w=w)))

    for name, cin, cout, stride, h, w in geo[:split_idx + 1]:
        conv_lines("front", name, cin, cout, stride, h, w)
    c_l = geo[split_idx][2]
    h_l, w_l = geo[split_idx][4], geo[split_idx][5]
    c_last = geo[-1][2]

    # unsplit baseline: remaining 2D stages plus the plain classifier head
    for name, cin, cout, stride, h, w in geo[split_idx + 1:]:
        conv_lines("baseline_back", name, cin, cout, stride, h, w)
    lines.append(CostLine("head.fc", "baseline_back",
                          op_cost("conv1d_points", c_last, k, kp=1, n=1)))

    # squeeze-excitation weights, applied once per frame
    hidden = c_l // 4
    lines.append(CostLine("kp.w1", "heatmap_head",
                          op_cost("conv1d_points", c_l, hidden, kp=1, n=t)))
    lines.append(CostLine("kp.w2", "heatmap_head",
                          op_cost("conv1d_points", hidden, c_l, kp=1, n=t)))

    n0 = alpha * t * h_l * w_l
    if cfg.transform:
        dim = c_l + 3
        widths = (64, 128, 256)
        cin_t = dim
        for i, cw in enumerate(widths, 1):
            lines.append(CostLine(f"tnet.conv{i}", "point_branch",
                                  op_cost("conv1d_points", cin_t, cw, kp=1, n=n0)))
            cin_t = cw
        for i, (fin, fout) in enumerate(((256, 128), (128, 64), (64, dim * dim)), 1):
            lines.append(CostLine(f"tnet.fc{i}", "point_branch",
                                  op_cost("conv1d_points", fin, fout, kp=1, n=1)))

    for i, (name, cin, cout, stride, h, w) in enumerate(geo[split_idx + 1:]):
        n_out = alpha * t * h * w
        cin_q = cin + 3 if (i == 0 and cfg.keep_coords) else cin
        lines.append(CostLine(f"{name}.conv1.1d", "point_branch",
                              op_cost("conv1d_points", cin_q, cout, kp=3, n=n_out)))
        lines.append(CostLine(f"{name}.conv2.1d", "point_branch",
                              op_cost("conv1d_points", cout, cout, kp=3, n=n_out)))
        lines.append(CostLine(f"{name}.proj.1d", "point_branch",
                              op_cost("conv1d_points", cin_q, cout, kp=1, n=n_out)))
    fuse_in = (c_l if cfg.concat else 0) + c_last
    lines.append(CostLine("fuse.fc", "point_branch",
                          op_cost("conv1d_points", fuse_in, k, kp=1, n=1)))

    h1 = out_extent(h_l, 3, 2, 1)
    w1 = out_extent(w_l, 3, 2, 1)
    h2 = out_extent(h1, 3, 2, 1)
    w2 = out_extent(w1, 3, 2, 1)
    lines.append(CostLine("aux.conv1", "aux_head",
                          op_cost("conv2d", c_l, c_l, ks=3, t=t, h=h1, w=w1)))
    lines.append(CostLine("aux.conv2", "aux_head",
                          op_cost("conv2d", c_l, c_l, ks=3, t=t, h=h2, w=w2)))
    lines.append(CostLine("aux.fc", "aux_head",
                          op_cost("conv1d_points", c_l, k, kp=1, n=1)))
    return CostReport(lines)


@dataclass
class SweepRow:
    split: str
    alpha: float
    gflops: float
    params: int


def sweep(cfg: TrainConfig, splits: Sequence[str] = ("s2", "s3", "s4"),
          alphas: Sequence[float] = (0.1, 0.3, 0.5),
          channels: Sequence[int] = DEFAULT_CHANNELS,
          strides: Sequence[int] = DEFAULT_STRIDES) -> List[SweepRow]:
    rows = []
    for split in splits:
        for alpha in alphas:
            rep = network_cost(replace(cfg, split=split, alpha=alpha),
                               channels, strides)
            rows.append(SweepRow(split=split, alpha=alpha,
                                 gflops=float(sum(rep.branch_flops_exact(b)
                                                  for b in OURS_BRANCHES)) / 1e9,
                                 params=rep.ours_params))
    return rows


def emit_report(report: CostReport, fileobj):
    fileobj.write("layer\tkind\tparams\tflops\n")
    for line in report.lines:
        fileobj.write(f"{line.branch}.{line.name}\t{line.cost.kind}\t"
                      f"{line.cost.params}\t{line.cost.flops}\n")
    for branch in OURS_BRANCHES + ("baseline_back",):
        fileobj.write(f"{branch}.total\ttotal\t{report.branch_params(branch)}\t"
                      f"{report.branch_flops(branch)}\n")
    fileobj.write(f"ours.total\ttotal\t{report.ours_params}\t{report.ours_flops}\n")
    fileobj.write(f"baseline.total\ttotal\t{report.baseline_params}\t{report.baseline_flops}\n")
    fileobj.write(f"# flops reduction vs baseline: {report.reduction_ratio:.4f}\n")
    fileobj.write(f"# back-end flops reduction: {report.backend_reduction:.4f}\n")


def emit_sweep(rows: List[SweepRow], fileobj):
    fileobj.write("split\talpha\tgflops\tparams\n")
    for r in rows:
        fileobj.write(f"{r.split}\t{r.alpha:.3f}\t{r.gflops:.6f}\t{r.params}\n")
