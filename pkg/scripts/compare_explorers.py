"""Mean learning curves for several explorers on one domain.

Example: ``python3 scripts/compare_explorers.py --domain tireworld --explorers glib-g glib-l babble
--interactions 1500 --interval 250 --seeds 10``. Prints one table row per evaluation point and
optionally writes the per-seed curves as CSV.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from glib_lab.harness import EXPLORERS, ExperimentConfig, curve_csv, run_seed


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--domain", default="blocks")
    ap.add_argument("--explorers", nargs="+", default=["glib-l", "babble"], choices=EXPLORERS)
    ap.add_argument("--interactions", type=int, default=1000)
    ap.add_argument("--interval", type=int, default=50)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--no-goal-filters", action="store_true")
    ap.add_argument("--out", type=Path, default=None, help="directory for per-explorer curve CSVs")
    args = ap.parse_args()

    curves = {}
    for name in args.explorers:
        cfg = ExperimentConfig(domain=args.domain, explorer=name, interactions=args.interactions,
                               eval_interval=args.interval, goal_filters=not args.no_goal_filters)
        results = [run_seed(cfg, s) for s in range(args.seeds)]
        xs = [p.interactions for p in results[0].points]
        err = np.mean([[p.prediction_error for p in r.points] for r in results], axis=0)
        succ = np.mean([[p.planning_success for p in r.points] for r in results], axis=0)
        spi = np.mean([s for r in results for s in r.explore_seconds]) if results[0].explore_seconds else 0.0
        curves[name] = (xs, err, succ, spi)
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"{args.domain}_{name}_curves.csv").write_text(curve_csv(results), encoding="utf-8")

    print(f"{args.domain}, {args.seeds} seeds: mean prediction error / planning success")
    print("interactions  " + "  ".join(f"{n:>15}" for n in curves))
    xs = next(iter(curves.values()))[0]
    for i, x in enumerate(xs):
        cells = "  ".join(f"{c[1][i]:6.3f} / {c[2][i]:5.2f}" for c in curves.values())
        print(f"{x:12d}  {cells}")
    print("sec/iter      " + "  ".join(f"{c[3]:15.4f}" for c in curves.values()))


if __name__ == "__main__":
    main()
