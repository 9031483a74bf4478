"""The ten primary acceptance criteria at their stated tolerances.

Each test records one pass/fail line (see conftest.py) before asserting.
Shared runs are cached so Blocks GLIB-L seeds feed criteria 1, 2, 9 and 10.
"""
import time
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest
from scipy.stats import chisquare

from acceptance_log import record
from glib_lab.env import load_domain
from glib_lab.harness import ExperimentConfig, run_seed
from glib_lab.logic import Conjunction, lit
from glib_lab.planning import STATS, determinize, plan
from oracles import reachable_pairs, three_block_pool
from test_learn import _three_outcome_samples, learned_outcome_probs

pytestmark = pytest.mark.slow

SEEDS10 = tuple(range(10))
SEEDS5 = tuple(range(5))


@lru_cache(maxsize=None)
def _runs(domain, explorer, interactions, interval, seeds, goal_filters=True):
    cfg = ExperimentConfig(domain=domain, explorer=explorer, interactions=interactions, eval_interval=interval,
                           goal_filters=goal_filters)
    t0 = time.perf_counter()
    results = [run_seed(cfg, s) for s in seeds]
    return results, time.perf_counter() - t0


def _mean_curve(results):
    xs = [p.interactions for p in results[0].points]
    err = np.mean([[p.prediction_error for p in r.points] for r in results], axis=0)
    succ = np.mean([[p.planning_success for p in r.points] for r in results], axis=0)
    return xs, err, succ


def _blocks_glib_l():
    return _runs("blocks", "glib-l", 1000, 50, SEEDS10)


def test_criterion_1_blocks_convergence():
    results, secs = _blocks_glib_l()
    xs, err, succ = _mean_curve(results)
    hit = [x for x, e, s in zip(xs, err, succ) if round(e, 2) == 0.0 and s >= 0.9]
    ok = bool(hit) and secs <= 15 * 60
    record(1, ok, f"GLIB-L Blocks: first error 0.00 with success >= 0.9 at {hit[0] if hit else None} "
                  f"interactions; final error {err[-1]:.3f}, success {succ[-1]:.2f}; {secs:.0f} s for 10 seeds")
    assert ok


def _dominance(domain):
    glib, _ = _blocks_glib_l() if domain == "blocks" else _runs(domain, "glib-l", 1000, 50, SEEDS10)
    babble, _ = _runs(domain, "babble", 1000, 50, SEEDS10)
    xs, _, g = _mean_curve(glib)
    _, _, b = _mean_curve(babble)
    idx = next((i for i, s in enumerate(g) if s >= 0.9), None)
    if idx is None:
        return False, f"{domain}: GLIB-L never reaches 0.9"
    gap = g[idx] - b[idx]
    return gap >= 0.2, f"{domain}: at {xs[idx]} GLIB-L {g[idx]:.2f} vs babble {b[idx]:.2f} (gap {gap:.2f})"


def test_criterion_2_directional_dominance():
    ok_b, msg_b = _dominance("blocks")
    ok_g, msg_g = _dominance("gripper")
    record(2, ok_b and ok_g, f"{msg_b}; {msg_g}; need gap >= 0.20")
    assert ok_b and ok_g


def test_criterion_3_tireworld_ground_beats_lifted():
    g, _ = _runs("tireworld", "glib-g", 1500, 1500, SEEDS10)
    l, _ = _runs("tireworld", "glib-l", 1500, 1500, SEEDS10)
    sg = np.mean([r.points[-1].planning_success for r in g])
    sl = np.mean([r.points[-1].planning_success for r in l])
    ok = sg - sl >= 0.1
    record(3, ok, f"Tireworld at 1500: GLIB-G {sg:.2f} vs GLIB-L {sl:.2f} (need margin >= 0.10)")
    assert ok


def test_criterion_4_recurrence_three_blocks():
    b = load_domain("blocks")
    pool = three_block_pool(b.domain)
    pairs = set()
    for p in pool:
        pairs |= reachable_pairs(b.truth, p.init)
    bundle = replace(b, problems=pool)
    cfg = ExperimentConfig(domain="blocks", explorer="glib-l", interactions=50000, eval_interval=50000,
                           eval_samples=1, skip_planning_eval=True, record_timing=False)
    steps = []
    covered = []
    for seed in SEEDS5:
        seen = set()
        last = [0]

        def on_step(i, t, m):
            seen.add((t.s.literals, t.a))
            last[0] = i
            return pairs <= seen

        run_seed(cfg, seed, bundle, on_step=on_step)
        steps.append(last[0])
        covered.append(len(seen & pairs) / len(pairs))
    ok = all(c == 1.0 for c in covered)
    record(4, ok, f"GLIB-L visits all {len(pairs)} reachable (s,a) pairs; steps needed per seed {steps} "
                  f"(limit 50000)")
    assert ok


def test_criterion_5_exhaustion_is_uniform():
    warmup, n = 200, 10000

    def cfg(k):
        return ExperimentConfig(domain="switches", explorer="glib-l", interactions=k, eval_interval=k,
                                eval_samples=10, skip_planning_eval=True, record_timing=False)

    acts = []
    # the same seed replays the warmup prefix exactly, so the plan counts are comparable
    early = run_seed(cfg(warmup), 0)
    r = run_seed(cfg(warmup + n), 0, on_step=lambda i, t, m: acts.append(t.a) if i > warmup else None)
    counts = {}
    for a in acts:
        counts[a] = counts.get(a, 0) + 1
    _, p = chisquare(list(counts.values()))
    late_plans = r.explorer.stats.plans - early.explorer.stats.plans
    ok = late_plans == 0 and len(counts) == 4 and p > 0.01
    record(5, ok, f"Switches after novelty exhaustion: {late_plans} plans after step {warmup}; "
                  f"chi-square p = {p:.3f} over {len(acts)} actions (need p > 0.01)")
    assert ok


def test_criterion_6_pinned_unreachable_goal():
    rooms = load_domain("rooms")
    goal = Conjunction((lit("at", "r3"),))
    s0 = rooms.problems[0].init
    cfg = ExperimentConfig(domain="rooms", explorer="glib-l", interactions=200, eval_interval=200, eval_samples=10,
                           skip_planning_eval=True, record_timing=False)
    finals = []
    for seed in SEEDS5:
        r = run_seed(cfg, seed, pinned_goal=goal)
        finals.append(bool(plan(s0, goal, determinize(r.model), horizon=cfg.horizon)))
    ok = not any(finals)
    record(6, ok, f"rooms at(r3): planner FAILURE after 200 interactions on {finals.count(False)}/5 seeds")
    assert ok


def test_criterion_7_learner_consistency():
    data = _three_outcome_samples((0.5, 0.3, 0.2), 1000, seed=0)
    got = learned_outcome_probs(data)
    dev = max(abs(got[c] - p) for c, p in zip(("red", "blue", "green"), (0.5, 0.3, 0.2)))
    ok = dev <= 0.03
    record(7, ok, f"3-outcome categorical at n=1000: max deviation {dev:.3f} (need <= 0.03)")
    assert ok


def test_criterion_9_timing_envelope():
    results, _ = _blocks_glib_l()
    spi = float(np.mean([s for r in results for s in r.explore_seconds]))
    ok = spi <= 0.5
    record(9, ok, f"GLIB-L Blocks exploration decision time {spi:.4f} s/iteration (need <= 0.5)")
    assert ok


def test_criterion_10_filter_neutrality():
    filt, _ = _blocks_glib_l()
    filt = [r for r in filt if r.seed in SEEDS5]
    raw, _ = _runs("blocks", "glib-l", 1000, 50, SEEDS5, goal_filters=False)
    e_f = np.mean([r.points[-1].prediction_error for r in filt])
    e_r = np.mean([r.points[-1].prediction_error for r in raw])
    t_f = np.mean([s for r in filt for s in r.explore_seconds])
    t_r = np.mean([s for r in raw for s in r.explore_seconds])
    ok = abs(e_f - e_r) <= 0.05 and t_r > t_f
    record(10, ok, f"final Blocks error filtered {e_f:.3f} vs unfiltered {e_r:.3f}; "
                   f"time {t_f:.4f} vs {t_r:.4f} s/iteration")
    assert ok


def test_criterion_8_plans_validate():
    # runs last in this module, after every other planner call of the session
    ok = STATS.plans > 0 and STATS.validated == STATS.plans
    record(8, ok, f"{STATS.validated}/{STATS.plans} returned plans validated by simulation")
    assert ok
