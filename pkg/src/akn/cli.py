"""Command-line entry point.

Subcommands: gen, train, eval, analyze, viz.  Exit codes: 0 on success,
2 for configuration errors, 3 for I/O and format errors.
"""

import argparse
import sys
from dataclasses import replace

from .config import TrainConfig, load_config
from .errors import ConfigError, FormatError


def _load_cfg(path) -> TrainConfig:
    if not path:
        cfg = TrainConfig()
        cfg.validate()
        return cfg
    return load_config(path)


def _cmd_gen(args) -> int:
    from .data import gen_dataset
    cfg = _load_cfg(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    n_train, n_val = gen_dataset(args.out, cfg)
    print(f"wrote {n_train} train / {n_val} val clips to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .train import train
    cfg = _load_cfg(args.config)
    result = train(cfg, args.data, args.out, echo=print)
    print(f"saved {result.ckpt_path}")
    return 0


def _cmd_eval(args) -> int:
    from .train import evaluate
    report = evaluate(args.ckpt, args.data)
    for line in report.lines():
        print(line)
    return 0


def _cmd_analyze(args) -> int:
    from .costs import emit_report, emit_sweep, network_cost, sweep
    cfg = _load_cfg(args.config)

    def emit(f):
        if args.sweep:
            emit_sweep(sweep(cfg), f)
        else:
            emit_report(network_cost(cfg), f)

    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            emit(f)
    else:
        emit(sys.stdout)
    return 0


def _cmd_viz(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import load_clip
    from .model import AKModel, model_from_checkpoint
    from .viz import render_clip
    model = model_from_checkpoint(load_checkpoint(args.ckpt))
    if not isinstance(model, AKModel):
        raise ConfigError("viz needs a stage-2 checkpoint")
    frames, label, _ = load_clip(args.clip)
    render_clip(model, frames, args.out)
    print(f"rendered clip (label {label}) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="akn",
                                description="keypoint-driven video classifier")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic clip dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--config", default=None)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(func=_cmd_gen)

    t = sub.add_parser("train", help="train stage 1 or stage 2")
    t.add_argument("--data", required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--out", required=True)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=_cmd_eval)

    a = sub.add_parser("analyze", help="parameter / flop cost breakdown")
    a.add_argument("--config", default=None)
    a.add_argument("--sweep", action="store_true")
    a.add_argument("--out", default=None)
    a.set_defaults(func=_cmd_analyze)

    v = sub.add_parser("viz", help="render keypoints and heatmaps for one clip")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--clip", required=True)
    v.add_argument("--out", required=True)
    v.set_defaults(func=_cmd_viz)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
