"""Command-line entry point: ``glib-lab run`` and ``glib-lab eval-model``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .env import Environment, load_domain
from .harness import (EXPLORERS, ConfigError, ExperimentConfig, load_suite, parse_config_text, planning_success,
                      prediction_error, run)
from .pddl import PDDLError, read_ndrs


def _run(args: argparse.Namespace) -> int:
    cfg = parse_config_text(Path(args.config).read_text(encoding="utf-8")) if args.config else ExperimentConfig()
    overrides = {}
    if args.explorer:
        overrides["explorer"] = args.explorer
    if args.domain:
        overrides["domain"] = args.domain
    if args.seeds is not None:
        overrides["seeds"] = list(range(args.seeds))
    if args.interactions is not None:
        overrides["interactions"] = args.interactions
    if args.out:
        overrides["out"] = args.out
    if args.no_goal_filters:
        overrides["goal_filters"] = False
    if args.no_midpolicy_replan:
        overrides["midpolicy_replan"] = False
    if args.no_timing:
        overrides["record_timing"] = False
    cfg = replace(cfg, **overrides)
    curves = run(cfg)
    for seed, points in curves.items():
        last = points[-1]
        print(f"seed {seed}: {last.interactions} interactions, prediction error {last.prediction_error:.3f}, "
              f"planning success {last.planning_success:.2f}, {last.seconds_per_iteration:.4f} s/iter")
    if cfg.out:
        print(f"wrote results to {cfg.out}")
    return 0


def _eval_model(args: argparse.Namespace) -> int:
    model = read_ndrs(Path(args.model).read_text(encoding="utf-8"))
    bundle = load_domain(args.domain)
    cfg = ExperimentConfig(domain=args.domain, suite=args.suite, eval_samples=args.eval_samples,
                           eval_seed=args.eval_seed)
    env = Environment(bundle.truth, bundle.problems, cfg.horizon)
    evals = env.sample_eval_transitions(cfg.eval_samples, np.random.default_rng(cfg.eval_seed))
    err = prediction_error(model, evals)
    succ = planning_success(model, load_suite(cfg, bundle), bundle.truth,
                            np.random.default_rng([cfg.eval_seed, 0]), cfg.horizon)
    print(f"prediction error {err:.3f}")
    print(f"planning success {succ:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glib-lab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at each evaluation")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run online model learning with one explorer")
    r.add_argument("--config", help="flat key = value experiment file")
    r.add_argument("--explorer", choices=EXPLORERS)
    r.add_argument("--domain")
    r.add_argument("--seeds", type=int, help="run seeds 0..N-1")
    r.add_argument("--interactions", type=int)
    r.add_argument("--out", help="output directory for CSVs and learned models")
    r.add_argument("--no-goal-filters", action="store_true", help="disable static and mutex goal filtering")
    r.add_argument("--no-midpolicy-replan", action="store_true",
                   help="follow babbled plans open-loop instead of replanning on surprise")
    r.add_argument("--no-timing", action="store_true", help="write 0 for sec_per_iter (byte-stable CSVs)")
    r.set_defaults(func=_run)

    e = sub.add_parser("eval-model", help="score a learned model dumped as PPDDL")
    e.add_argument("--model", required=True)
    e.add_argument("--domain", required=True)
    e.add_argument("--suite", help="directory of planning problems (default: bundled suite)")
    e.add_argument("--eval-samples", type=int, default=200)
    e.add_argument("--eval-seed", type=int, default=12345)
    e.set_defaults(func=_eval_model)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, PDDLError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
