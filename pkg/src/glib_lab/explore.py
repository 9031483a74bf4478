"""Exploration strategies: goal-literal babbling (ground and lifted), action babbling, oracle."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .filters import GROUND, LIFTED, FilterState, goal_passes
from .logic import (Conjunction, Literal, Predicate, State, Var, canonical_key, conjunction_from_key,
                    conjunction_key, types_compatible)
from .ndr import NO_PREDICTION, NDRSet, ground_actions, most_likely_next
from .planning import DeterminizedModel, Plan, det_step, determinize, plan

ENUM_LIMIT = 5000


class _None:
    def __repr__(self) -> str:
        return "NONE"

    def __bool__(self) -> bool:
        return False


NONE = _None()


@dataclass(frozen=True)
class GoalAction:
    goal: Conjunction
    action: Literal  # lifted in lifted mode, ground in ground mode


def goal_key(goal: Conjunction, mode: str):
    if mode == GROUND:
        return frozenset(goal.literals)
    return conjunction_key(goal)


class NoveltyCache:
    """Forms of every <= k subset of every observed state."""

    def __init__(self, mode: str = LIFTED, k: int = 2):
        if mode not in (GROUND, LIFTED):
            raise ValueError(f"unknown mode {mode}")
        if k < 1:
            raise ValueError("k must be >= 1")
        self.mode = mode
        self.k = k
        self.seen: Set = set()
        self._states: Set = set()
        self.version = 0

    def observe(self, s: State) -> "NoveltyCache":
        sig = (s.literals, s.objects) if self.mode == LIFTED else s.literals
        if sig in self._states:
            return self
        self._states.add(sig)
        lits = sorted(s.literals)
        types = s.object_types
        before = len(self.seen)
        for size in range(1, self.k + 1):
            for sub in itertools.combinations(lits, size):
                self.seen.add(frozenset(sub) if self.mode == GROUND else canonical_key(sub, types))
        if len(self.seen) != before:
            self.version += 1
        return self

    def is_novel(self, goal: Conjunction) -> bool:
        return goal_key(goal, self.mode) not in self.seen

    def __len__(self) -> int:
        return len(self.seen)


# --- goal spaces -------------------------------------------------------------

def _partitions(n: int):
    """Restricted growth strings of length n (set partitions of slots)."""
    if n == 0:
        yield ()
        return

    def rec(prefix: List[int], top: int):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in range(top + 2):
            prefix.append(v)
            yield from rec(prefix, max(top, v))
            prefix.pop()

    yield from rec([], -1)


def lifted_goal_space(predicates: Sequence[Predicate], k: int, limit: int = ENUM_LIMIT) -> Optional[List[Conjunction]]:
    """All canonical lifted positive conjunctions of size 1..k, or None if larger than `limit`."""
    keys: Dict = {}
    preds = sorted(predicates, key=lambda p: p.name)
    for size in range(1, k + 1):
        for combo in itertools.combinations_with_replacement(preds, size):
            slots = [(i, j, p.arg_type(j)) for i, p in enumerate(combo) for j in range(p.arity)]
            for rgs in _partitions(len(slots)):
                vtype: Dict[int, str] = {}
                ok = True
                for (_, _, t), v in zip(slots, rgs):
                    if vtype.setdefault(v, t) != t:
                        ok = False
                        break
                if not ok:
                    continue
                names = {v: f"?v{v}" for v in vtype}
                args: List[List[str]] = [[] for _ in combo]
                for (i, _, _), v in zip(slots, rgs):
                    args[i].append(names[v])
                lits = tuple(Literal(p.name, tuple(a)) for p, a in zip(combo, args))
                if len(set(lits)) != len(lits):
                    continue
                key = canonical_key(lits, {names[v]: t for v, t in vtype.items()})
                if key not in keys:
                    keys[key] = conjunction_from_key(key)
                    if len(keys) > limit:
                        return None
    return list(keys.values())


def ground_literals(predicates: Sequence[Predicate], s: State) -> List[Literal]:
    out = []
    for p in sorted(predicates, key=lambda p: p.name):
        pools = [s.objects_of(p.arg_type(i)) for i in range(p.arity)]
        out.extend(Literal(p.name, c) for c in itertools.product(*pools))
    return out


class GoalSpace:
    """Finite goal enumeration used to detect exhaustion without burning the rejection budget."""

    def __init__(self, predicates: Sequence[Predicate], mode: str, k: int):
        self.predicates = tuple(predicates)
        self.mode = mode
        self.k = k
        self._lifted: Optional[List[Conjunction]] = None
        self._lifted_done = False
        self._ground: Dict[frozenset, Optional[List[Conjunction]]] = {}
        self._open: Dict[tuple, Optional[List[Tuple[object, Conjunction]]]] = {}

    def all_goals(self, s: State) -> Optional[List[Conjunction]]:
        if self.mode == LIFTED:
            if not self._lifted_done:
                self._lifted = lifted_goal_space(self.predicates, self.k)
                self._lifted_done = True
            return self._lifted
        got = self._ground.get(s.objects, ())
        if got == ():
            lits = ground_literals(self.predicates, s)
            total = sum(comb(len(lits), i) for i in range(1, self.k + 1))
            if total > ENUM_LIMIT:
                got = None
            else:
                got = [Conjunction(c) for size in range(1, self.k + 1) for c in itertools.combinations(lits, size)]
            self._ground[s.objects] = got
        return got

    def open_goals(self, s: State, cache: NoveltyCache, f: FilterState) -> Optional[List[Tuple[object, Conjunction]]]:
        """Novel goals passing the filters, as (key, goal); None when the space is too large to list."""
        tag = (cache.version, len(cache.seen), f.fingerprint, id(f), s.objects if self.mode == GROUND else None)
        if tag in self._open:
            return self._open[tag]
        goals = self.all_goals(s)
        out = None
        if goals is not None:
            out = []
            for g in goals:
                key = goal_key(g, self.mode)
                if key not in cache.seen and goal_passes(g, f):
                    out.append((key, g))
        if len(self._open) > 8:
            self._open.clear()
        self._open[tag] = out
        return out


# --- sampling --------------------------------------------------------------

def _sample_lifted_goal(predicates: Sequence[Predicate], size: int, rng: np.random.Generator) -> Optional[Conjunction]:
    variables: List[Var] = []
    lits = []
    for _ in range(size):
        p = predicates[int(rng.integers(len(predicates)))]
        args = []
        for i in range(p.arity):
            t = p.arg_type(i)
            options = [v for v in variables if v.type == t] + [None]
            pick = options[int(rng.integers(len(options)))]
            if pick is None:
                pick = Var(f"?v{len(variables)}", t)
                variables.append(pick)
            args.append(pick.name)
        lits.append(Literal(p.name, tuple(args)))
    if len(set(lits)) != len(lits):
        return None
    used = {a for l in lits for a in l.args}
    return Conjunction(tuple(lits), tuple(v for v in variables if v.name in used))


def _sample_lifted_action(goal: Conjunction, action_predicates: Sequence[Predicate],
                          rng: np.random.Generator) -> Literal:
    ap = action_predicates[int(rng.integers(len(action_predicates)))]
    fresh = 0
    args = []
    for i in range(ap.arity):
        t = ap.arg_type(i)
        options = [v.name for v in goal.variables if types_compatible(t, v.type)] + [None]
        pick = options[int(rng.integers(len(options)))]
        if pick is None:
            pick = f"?a{fresh}"
            fresh += 1
        args.append(pick)
    return Literal(ap.name, tuple(args))


def _sample_ground_action(action_predicates: Sequence[Predicate], s: State,
                          rng: np.random.Generator) -> Optional[Literal]:
    ap = action_predicates[int(rng.integers(len(action_predicates)))]
    args = []
    for i in range(ap.arity):
        pool = s.objects_of(ap.arg_type(i))
        if not pool:
            return None
        args.append(pool[int(rng.integers(len(pool)))])
    return Literal(ap.name, tuple(args))


def sample_goal_action(cache: NoveltyCache, filters: FilterState, k: int, mode: str, rng: np.random.Generator,
                       predicates: Sequence[Predicate], action_predicates: Sequence[Predicate], s: State,
                       budget: int = 1000, space: Optional[GoalSpace] = None):
    """Rejection-sample a novel, filter-passing goal with a paired action; NONE after `budget` draws."""
    preds = sorted(predicates, key=lambda p: p.name)
    aps = sorted(action_predicates, key=lambda p: p.name)
    open_keys = None
    if space is not None:
        listed = space.open_goals(s, cache, filters)
        if listed is not None:
            if not listed:
                return NONE
            open_keys = {key for key, _ in listed}
    ground_pool = ground_literals(preds, s) if mode == GROUND else None
    for _ in range(budget):
        size = int(rng.integers(1, k + 1))
        if mode == LIFTED:
            goal = _sample_lifted_goal(preds, size, rng)
            if goal is None:
                continue
        else:
            if len(ground_pool) < size:
                continue
            idx = rng.choice(len(ground_pool), size=size, replace=False)
            goal = Conjunction(tuple(ground_pool[i] for i in sorted(idx)))
        key = goal_key(goal, mode)
        if open_keys is not None:
            if key not in open_keys:
                continue
        elif key in cache.seen or not goal_passes(goal, filters):
            continue
        if mode == LIFTED:
            action = _sample_lifted_action(goal, aps, rng)
        else:
            action = _sample_ground_action(aps, s, rng)
            if action is None:
                continue
        return GoalAction(goal, action)
    return NONE


# --- explorers -------------------------------------------------------------

def action_babble(s: State, action_predicates: Sequence[Predicate], rng: np.random.Generator) -> Literal:
    acts = ground_actions(action_predicates, s)
    if not acts:
        raise ValueError("no ground actions: the state has no objects of the required types")
    return acts[int(rng.integers(len(acts)))]


@dataclass
class ExplorerConfig:
    mode: str = LIFTED
    k: Optional[int] = None
    n_tries: int = 100
    plan_timeout: float = 10.0
    plan_expansions: int = 60
    midpolicy_replan: bool = True
    horizon: int = 25

    def __post_init__(self) -> None:
        if self.k is None:
            self.k = 1 if self.mode == GROUND else 2
        if self.n_tries < 1:
            raise ValueError("n_tries must be >= 1")
        if self.mode not in (GROUND, LIFTED):
            raise ValueError(f"unknown mode {self.mode}")


@dataclass
class ExplorerState:
    """Policy in progress: remaining plan, predicted states, then the final action."""

    actions: List[Literal] = field(default_factory=list)
    expected: List[State] = field(default_factory=list)
    goal: Optional[Conjunction] = None
    lifted_action: Optional[Literal] = None
    final_action: Optional[Literal] = None
    last_expected: Optional[State] = None

    @property
    def active(self) -> bool:
        return self.final_action is not None

    def clear(self) -> None:
        self.actions, self.expected = [], []
        self.goal = self.lifted_action = self.final_action = self.last_expected = None


@dataclass
class GlibStats:
    babbled: Dict = field(default_factory=dict)  # goal key -> times a plan was adopted for it
    fallbacks: int = 0
    plans: int = 0
    replans: int = 0
    none: int = 0


class GLIB:
    """Goal-literal babbling explorer (one instance per run)."""

    def __init__(self, predicates: Sequence[Predicate], action_predicates: Sequence[Predicate],
                 cfg: Optional[ExplorerConfig] = None, pinned_goal: Optional[Conjunction] = None):
        self.cfg = cfg or ExplorerConfig()
        self.predicates = sorted(predicates, key=lambda p: p.name)
        self.action_predicates = sorted(action_predicates, key=lambda p: p.name)
        self._ap = {p.name: p for p in self.action_predicates}
        self.cache = NoveltyCache(self.cfg.mode, self.cfg.k)
        self.space = GoalSpace(self.predicates, self.cfg.mode, self.cfg.k)
        self.state = ExplorerState()
        self.stats = GlibStats()
        self.pinned_goal = pinned_goal
        self._memo: Dict[tuple, object] = {}
        self._dm: Optional[DeterminizedModel] = None
        self._dm_src = ""

    def observe(self, s: State) -> None:
        self.cache.observe(s)

    def reset_episode(self) -> None:
        self.state.clear()

    def _determinized(self, m: NDRSet) -> DeterminizedModel:
        if self._dm is None or self._dm_src != m.fingerprint:
            self._dm = determinize(m)
            self._dm_src = m.fingerprint
            self._memo.clear()
        return self._dm

    def _plan(self, s: State, goal: Conjunction, dm: DeterminizedModel, horizon: int):
        key = (s.literals, s.objects, goal_key(goal, self.cfg.mode), horizon)
        got = self._memo.get(key)
        if got is None:
            got = plan(s, goal, dm, self.cfg.plan_timeout, horizon, self.cfg.plan_expansions)
            if len(self._memo) > 50000:
                self._memo.clear()
            self._memo[key] = got
        return got

    def _ground_final(self, action: Literal, binding: Dict[str, str], s: State, rng: np.random.Generator) -> Literal:
        """Goal variables take their witnesses; other variables get uniform random objects."""
        if self.cfg.mode == GROUND:
            return action
        ap = self._ap[action.predicate]
        fresh: Dict[str, str] = {}
        args = []
        for i, a in enumerate(action.args):
            if a in binding:
                args.append(binding[a])
                continue
            if a not in fresh:
                pool = s.objects_of(ap.arg_type(i))
                fresh[a] = pool[int(rng.integers(len(pool)))]
            args.append(fresh[a])
        return Literal(action.predicate, tuple(args))

    def _follow(self, p: Plan, goal: Conjunction, action: Literal, rng: np.random.Generator) -> None:
        st = self.state
        st.actions = list(p.actions)
        st.expected = list(p.states[1:])
        st.goal = goal
        st.lifted_action = action
        st.final_action = self._ground_final(action, p.goal_binding, p.states[-1], rng)

    def act(self, s: State, m: NDRSet, rng: np.random.Generator, filters: Optional[FilterState],
            remaining: Optional[int] = None) -> Literal:
        """Choose the next ground action at `s` under the current learned model `m`.

        `remaining` is the number of steps left in the episode (plans are capped by it).
        """
        horizon = self.cfg.horizon if remaining is None else max(remaining, 0)
        dm = self._determinized(m)
        st = self.state
        if st.active:
            if (self.cfg.midpolicy_replan and st.last_expected is not None
                    and s.literals != st.last_expected.literals):
                self.stats.replans += 1
                p = self._plan(s, st.goal, dm, max(horizon - 1, 0))
                if p:
                    self._follow(p, st.goal, st.lifted_action, rng)
                else:
                    st.clear()
            if st.active:
                return self._emit()
        return self._babble(s, dm, rng, horizon, filters)

    def _emit(self) -> Literal:
        st = self.state
        if st.actions:
            st.last_expected = st.expected.pop(0)
            return st.actions.pop(0)
        a = st.final_action
        st.clear()
        return a

    def _babble(self, s: State, dm: DeterminizedModel, rng: np.random.Generator, horizon: int,
                filters: Optional[FilterState]) -> Literal:
        failed: Set = set()
        listed = None
        if self.pinned_goal is None:
            if filters is None:
                raise ValueError("filters are required to babble new goals")
            listed = self.space.open_goals(s, self.cache, filters)
        n_open = len(listed) if listed is not None else None
        for _ in range(self.cfg.n_tries):
            if self.pinned_goal is not None:
                ga = GoalAction(self.pinned_goal, _sample_lifted_action(self.pinned_goal, self.action_predicates, rng)
                                if self.pinned_goal.variables else
                                _sample_ground_action(self.action_predicates, s, rng))
            else:
                ga = sample_goal_action(self.cache, filters, self.cfg.k, self.cfg.mode, rng, self.predicates,
                                        self.action_predicates, s, 10 * self.cfg.n_tries, self.space)
            if ga is NONE:
                self.stats.none += 1
                break
            # the final action occupies one step of the remaining horizon
            p = self._plan(s, ga.goal, dm, max(horizon - 1, 0))
            if p:
                self._follow(p, ga.goal, ga.action, rng)
                key = goal_key(ga.goal, self.cfg.mode)
                self.stats.babbled[key] = self.stats.babbled.get(key, 0) + 1
                self.stats.plans += 1
                return self._emit()
            failed.add(goal_key(ga.goal, self.cfg.mode))
            if n_open is not None and len(failed) >= n_open:
                break
            if self.pinned_goal is not None:
                break
        self.stats.fallbacks += 1
        return action_babble(s, self.action_predicates, rng)


# --- oracle ------------------------------------------------------------------

def _mismatch(learned: NDRSet, truth: NDRSet, s: State, a: Literal) -> bool:
    pl = most_likely_next(learned, s, a)
    pt = most_likely_next(truth, s, a)
    if pl is NO_PREDICTION or pt is NO_PREDICTION:
        return pl is not pt
    return pl.literals != pt.literals


def oracle_step(s: State, learned: NDRSet, truth: NDRSet, rng: np.random.Generator) -> Literal:
    """An action whose most likely outcome differs between models now or within two steps, else random."""
    acts = ground_actions(truth.action_predicates, s)
    if not acts:
        raise ValueError("no ground actions")
    for a in acts:
        if _mismatch(learned, truth, s, a):
            return a
    dl, dt = determinize(learned), determinize(truth)
    for a in acts:
        s_learned, s_truth = det_step(dl, s, a), det_step(dt, s, a)
        if s_learned.literals != s_truth.literals:
            return a
        for a2 in ground_actions(truth.action_predicates, s_truth):
            if _mismatch(learned, truth, s_truth, a2):
                return a
    return action_babble(s, truth.action_predicates, rng)
