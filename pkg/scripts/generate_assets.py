"""Regenerate the bundled problem pools and planning suites.

Pools are random initial states; suite goals are built by rolling the ground
truth for a few effectful random steps and conjoining literals that changed.
Tireworld suite goals are target locations instead (see ``_tire_goal``).
Run from the repo root: ``python3 scripts/generate_assets.py``.
"""
from __future__ import annotations

import argparse
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np

from glib_lab.env import DEFAULT_HORIZON, assets_root, load_domain
from glib_lab.harness import planning_success
from glib_lab.logic import Conjunction, Obj, State, lit
from glib_lab.ndr import ground_actions, sample_next
from glib_lab.pddl import ProblemSpec, write_problem

MIN_GOAL = 3


def _towers(names: List[str], rng: np.random.Generator, p_stack: float = 0.6,
            max_height: int = 0) -> List[List[str]]:
    """Random towers; `max_height` 0 means unbounded."""
    order = [names[i] for i in rng.permutation(len(names))]
    towers: List[List[str]] = []
    for b in order:
        open_ = [t for t in towers if not max_height or len(t) < max_height]
        if open_ and rng.random() < p_stack:
            open_[int(rng.integers(len(open_)))].append(b)
        else:
            towers.append([b])
    return towers


def blocks_init(n: int, rng: np.random.Generator) -> State:
    names = [f"b{i}" for i in range(n)]
    lits = {lit("handempty")}
    # low towers only, so that three-block stacks are new to the agent
    for t in _towers(names, rng, p_stack=0.3, max_height=2):
        lits.add(lit("ontable", t[0]))
        lits.update(lit("on", a, b) for b, a in zip(t, t[1:]))
        lits.add(lit("clear", t[-1]))
    return State(frozenset(lits), frozenset(Obj(b) for b in names))


def exploding_init(n: int, rng: np.random.Generator) -> State:
    names = [f"b{i}" for i in range(n)]
    lits = {lit("emptyhand"), lit("no-destroyed-table")}
    for t in _towers(names, rng):
        lits.add(lit("on-table", t[0]))
        lits.update(lit("on", a, b) for b, a in zip(t, t[1:]))
        lits.add(lit("clear", t[-1]))
    for b in names:
        lits.add(lit("no-detonated", b))
        lits.add(lit("no-destroyed", b))
    return State(frozenset(lits), frozenset(Obj(b, "block") for b in names))


def gripper_init(n_objects: int, rng: np.random.Generator) -> State:
    rooms, grippers = ["rooma", "roomb"], ["left", "right"]
    balls = [f"ball{i}" for i in range(n_objects - 4)]
    lits = {lit("at-robby", rooms[int(rng.integers(2))])}
    lits.update(lit("free", g) for g in grippers)
    lits.update(lit("at", b, rooms[int(rng.integers(2))]) for b in balls)
    objs = [Obj(r, "room") for r in rooms] + [Obj(g, "gripper") for g in grippers] + [Obj(b, "ball") for b in balls]
    return State(frozenset(lits), frozenset(objs))


def tire_loc(i: int, j: int) -> str:
    return f"l-{i}-{j}"


def tireworld_init(side: int) -> Tuple[State, str]:
    """Triangle of locations (i, j), i + j <= side + 1; the row i = 1 is the spare-free direct route."""
    locs = [(i, j) for i in range(1, side + 1) for j in range(1, side + 2 - i)]
    inside = set(locs)
    lits = {lit("vehicle-at", tire_loc(1, 1)), lit("not-flattire")}
    for i, j in locs:
        for a, b in ((i, j + 1), (i + 1, j)):
            if (a, b) in inside:
                lits.add(lit("road", tire_loc(i, j), tire_loc(a, b)))
        if i > 1 and (i - 1, j + 1) in inside:
            lits.add(lit("road", tire_loc(i, j), tire_loc(i - 1, j + 1)))
        if i > 1:
            lits.add(lit("spare-in", tire_loc(i, j)))
    objs = frozenset(Obj(tire_loc(i, j), "location") for i, j in locs)
    return State(frozenset(lits), objs), tire_loc(1, side)


def _rollout_goal(bundle, s0: State, rng: np.random.Generator, steps: int,
                  exclude: frozenset = frozenset()) -> Conjunction:
    """Conjoin >= MIN_GOAL literals changed by `steps` effectful random ground-truth steps.

    Predicates in `exclude` never appear in the goal (e.g. Tireworld's tire status).
    """
    for _ in range(1000):
        s = s0
        done = 0
        for _ in range(steps * 20):
            acts = ground_actions(bundle.truth.action_predicates, s)
            nxt = sample_next(bundle.truth, s, acts[int(rng.integers(len(acts)))], rng)
            if nxt != s:
                done += 1
                s = nxt
            if done >= steps:
                break
        added = sorted(l for l in s.literals - s0.literals if l.predicate not in exclude)
        removed = sorted(l for l in s0.literals - s.literals if l.predicate not in exclude)
        changed = added + [l.negate() for l in removed]
        if len(added) >= MIN_GOAL:
            pick = rng.choice(len(added), size=min(len(added), MIN_GOAL + 1), replace=False)
            return Conjunction(tuple(added[i] for i in sorted(pick)))
        if len(changed) >= MIN_GOAL:
            return Conjunction(tuple(changed[:MIN_GOAL + 1]))
    raise RuntimeError("could not build a goal with enough changed literals")


def _truth_rate(bundle, s0: State, goal: Conjunction, trials: int = 30) -> float:
    probe = ProblemSpec("probe", bundle.domain.name, s0.objects, s0, goal)
    return planning_success(bundle.truth, [probe] * trials, bundle.truth, np.random.default_rng(0),
                            DEFAULT_HORIZON.get(bundle.name, 25))


def _tire_goal(bundle, s0: State, rng: np.random.Generator, trials: int = 20) -> Conjunction:
    """Reach a location at least two moves away with a usable tire.

    Targets are kept only if the ground-truth replanning policy reaches them in
    90% of seeded trials within the Tireworld horizon.
    """
    locs = sorted(o.name for o in s0.objects)
    for t in [locs[i] for i in rng.permutation(len(locs))]:
        if t in ("l-1-1", "l-1-2"):
            continue
        goal = Conjunction((lit("vehicle-at", t), lit("vehicle-at", "l-1-1", negated=True), lit("not-flattire")))
        probe = ProblemSpec("probe", bundle.domain.name, s0.objects, s0, goal)
        rate = planning_success(bundle.truth, [probe] * trials, bundle.truth, np.random.default_rng(0),
                                DEFAULT_HORIZON["tireworld"])
        if rate >= 0.9:
            return goal
    raise RuntimeError("no Tireworld target is solvable within the horizon")


def _write(dirpath: Path, items: List[Tuple[str, str, State, Conjunction]]) -> None:
    dirpath.mkdir(parents=True, exist_ok=True)
    for old in dirpath.glob("*.ppddl"):
        old.unlink()
    for fname, domain_name, s, g in items:
        (dirpath / f"{fname}.ppddl").write_text(write_problem(fname, domain_name, s, g), encoding="utf-8")


def generate(root: Path, seed: int, pool_size: int, suite_size: int) -> Dict[str, Tuple[int, int]]:
    rng = np.random.default_rng(seed)
    makers: Dict[str, Callable[[], State]] = {
        "blocks": lambda: blocks_init(int(rng.integers(5, 8)), rng),
        "exploding_blocks": lambda: exploding_init(int(rng.integers(5, 8)), rng),
        "gripper": lambda: gripper_init(int(rng.integers(8, 17)), rng),
    }
    exclude = {"exploding_blocks": frozenset({"no-destroyed", "no-destroyed-table", "no-detonated"})}
    # longer witness rollouts give multi-step goals (and, in Exploding Blocks, goals that can fail)
    suite_steps = {"blocks": (8, 15), "exploding_blocks": (8, 15), "gripper": (8, 15)}
    report = {}
    for name, make in makers.items():
        bundle = load_domain(name, root)
        dname = bundle.domain.name
        pool = [make() for _ in range(pool_size)]
        probs = [(f"p{i:02d}", dname, s, _rollout_goal(bundle, s, rng, 4, exclude.get(name, frozenset())))
                 for i, s in enumerate(pool)]
        suite = []
        safe = 0
        while len(suite) < suite_size:
            s = make()
            lo, hi = suite_steps.get(name, (3, 7))
            goal = _rollout_goal(bundle, s, rng, int(rng.integers(lo, hi)), exclude.get(name, frozenset()))
            if name == "exploding_blocks":
                # at least half the suite must be goals the optimal policy sometimes fails
                if _truth_rate(bundle, s, goal) == 1.0:
                    if safe >= suite_size - suite_size // 2:
                        continue
                    safe += 1
            suite.append((f"s{len(suite):02d}", dname, s, goal))
        _write(root / name / "problems", probs)
        _write(root / name / "suite", suite)
        report[name] = (len(probs), len(suite))

    bundle = load_domain("tireworld", root)
    dname = bundle.domain.name
    probs, suite = [], []
    for k, side in enumerate((3, 5)):
        s, goal_loc = tireworld_init(side)
        probs.append((f"p{k:02d}", dname, s, Conjunction((lit("vehicle-at", goal_loc),))))
    for i in range(suite_size):
        side = (3, 5)[i % 2]
        s, _ = tireworld_init(side)
        suite.append((f"s{i:02d}", dname, s, _tire_goal(bundle, s, rng)))
    _write(root / "tireworld" / "problems", probs)
    _write(root / "tireworld" / "suite", suite)
    report["tireworld"] = (len(probs), len(suite))
    return report


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", type=Path, default=assets_root())
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--pool-size", type=int, default=20)
    ap.add_argument("--suite-size", type=int, default=10)
    args = ap.parse_args()
    for name, (np_, ns) in generate(args.root, args.seed, args.pool_size, args.suite_size).items():
        print(f"{name}: {np_} problems, {ns} suite problems")


if __name__ == "__main__":
    main()
