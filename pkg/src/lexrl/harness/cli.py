"""Command line: ``lexrl train | eval | oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..oracle import MdpFormatError, load_mdp
from .config import ConfigError, RunConfig, load_config
from .experiment import HarnessError, evaluate, train_all
from .oracle_report import build_report, format_report


def _thresholds(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if any(k < 0 for k in values):
        raise argparse.ArgumentTypeError("thresholds must be non-negative")
    return values


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
        cfg = replace(cfg, trainer=replace(cfg.trainer, seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    return cfg


def _cmd_train(args) -> int:
    cfg = _run_config(args)
    written = train_all(cfg, include_lagrangian=cfg.train_lagrangian or args.lagrangian)
    for tag, path in written.items():
        print(f"{tag}: {path}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _run_config(args)
    if args.episodes is not None:
        cfg = replace(cfg, evaluation=replace(cfg.evaluation, episodes=args.episodes))
    payload = evaluate(
        cfg,
        args.mode,
        weights_dir=args.weights or cfg.out,
        out=args.eval_out,
        channel=args.channel,
        thresholds=args.thresholds,
    )
    usage = ", ".join(f"{k} {v:.1%}" for k, v in payload["usage_fraction"].items() if v)
    print(
        f"{args.mode}: outside position {payload['pct_outside_position']:.2f}%, "
        f"outside angle {payload['pct_outside_angle']:.2f}%, "
        f"mean |force| {payload['mean_abs_force']:.3f} N over {payload['steps_counted']} steps "
        f"in {payload['episodes']} episodes; usage {usage}"
    )
    return 0


def _cmd_oracle(args) -> int:
    path = Path(args.mdp_file)
    if not path.exists():
        raise MdpFormatError(f"{path}: no such file")
    report = build_report(load_mdp(path), name=path.stem)
    print(format_report(report))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0 if report["undominated"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lexrl", description="Lexicographic deep Q-learning on cart-pole.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--out", help="run directory (weights, logs, evaluations)")

    train = sub.add_parser("train", help="train the Q0, Q1, Q2 critics")
    common(train)
    train.add_argument("--lagrangian", action="store_true", help="also train the scalarised critic")
    train.set_defaults(func=_cmd_train)

    ev = sub.add_parser("eval", help="evaluate a greedy controller")
    common(ev)
    ev.add_argument("--mode", choices=("single", "lex", "lagrangian"), default="lex")
    ev.add_argument("--channel", type=int, help="critic index for --mode single")
    ev.add_argument("--thresholds", type=_thresholds, help="per-step violation probabilities, e.g. 0.05,0.05")
    ev.add_argument("--episodes", type=int, help="override [evaluation] episodes")
    ev.add_argument("--weights", help="directory holding the weight files (default: --out)")
    ev.add_argument("--eval-out", help="directory for the CSV/JSON outputs")
    ev.set_defaults(func=_cmd_eval)

    orc = sub.add_parser("oracle", help="exhaustive lexicographic search on a tabular MDP file")
    orc.add_argument("mdp_file")
    orc.add_argument("--out", help="write the report as JSON")
    orc.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, HarnessError, MdpFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
