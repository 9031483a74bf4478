"""Static-goal and approximate-mutex filtering of babbled goals."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set

import numpy as np

from .logic import Conjunction, Literal, State, canonical_key
from .ndr import NDRSet, ground_actions, sample_next

GROUND, LIFTED = "ground", "lifted"


class StaleFilterError(RuntimeError):
    """The filter was computed from a different model than the one in use."""


@dataclass(frozen=True)
class FilterState:
    """Filters computed from one model.

    Mutexes are stored by complement: ``cohold`` holds every literal pair seen
    together in a sampled state, and any other pair counts as mutex.
    """

    static_predicates: FrozenSet[str]
    cohold: FrozenSet
    fingerprint: str
    mode: str = LIFTED
    enabled: bool = True

    def is_mutex(self, l1: Literal, l2: Literal, types: Optional[Dict[str, str]] = None) -> bool:
        return pair_key(l1, l2, self.mode, types) not in self.cohold


def pair_key(l1: Literal, l2: Literal, mode: str, types: Optional[Dict[str, str]] = None):
    if mode == GROUND:
        return frozenset((l1, l2))
    return canonical_key((l1, l2), types)


def compute_static(m: NDRSet) -> FrozenSet[str]:
    changing = {l.predicate for r in m.all_rules() for _, eff in r.outcomes
                if isinstance(eff, tuple) for l in eff}
    return frozenset(p.name for p in m.predicates if p.name not in changing)


def rollout_states(m: NDRSet, inits: Sequence[State], n_rollouts: int, rollout_len: int,
                   rng: np.random.Generator) -> List[State]:
    """Random-action rollouts of the learned model; noise outcomes leave the state unchanged."""
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    if not inits:
        raise ValueError("need at least one initial state")
    out: List[State] = []
    actions_cache: Dict[frozenset, List[Literal]] = {}
    for _ in range(n_rollouts):
        s = inits[int(rng.integers(len(inits)))]
        out.append(s)
        acts = actions_cache.get(s.objects)
        if acts is None:
            acts = actions_cache[s.objects] = ground_actions(m.action_predicates, s)
        for _ in range(rollout_len):
            s = sample_next(m, s, acts[int(rng.integers(len(acts)))], rng)
            out.append(s)
    return out


class _PairMemo:
    """Per-state co-holding pair keys, reused across recomputations."""

    def __init__(self, limit: int = 20000):
        self.memo: Dict[tuple, FrozenSet] = {}
        self.limit = limit

    def pairs(self, s: State, mode: str) -> FrozenSet:
        key = (mode, s.literals, s.objects if mode == LIFTED else None)
        got = self.memo.get(key)
        if got is None:
            types = s.object_types
            lits = sorted(s.literals)
            got = frozenset(pair_key(a, b, mode, types) for a, b in itertools.combinations(lits, 2))
            if len(self.memo) >= self.limit:
                self.memo.clear()
            self.memo[key] = got
        return got


_MEMO = _PairMemo()


def compute_mutexes(m: NDRSet, inits: Sequence[State], n_rollouts: int, rollout_len: int,
                    rng: np.random.Generator, mode: str = LIFTED) -> FrozenSet:
    """The co-hold set over sampled reachable states; pairs outside it are approximate mutexes.

    Every initial state counts as a sample, whether or not a rollout starts there.
    """
    seen: Set[tuple] = set()
    cohold: Set = set()
    for s in itertools.chain(inits, rollout_states(m, inits, n_rollouts, rollout_len, rng)):
        k = (s.literals, s.objects)
        if k in seen:
            continue
        seen.add(k)
        cohold |= _MEMO.pairs(s, mode)
    return frozenset(cohold)


def mutex_pairs(cohold: Iterable, literals: Sequence[Literal], mode: str = GROUND,
                types: Optional[Dict[str, str]] = None) -> Set[FrozenSet[Literal]]:
    """Explicit mutex pairs among `literals` (helper for tests and reporting)."""
    cohold = set(cohold)
    return {frozenset((a, b)) for a, b in itertools.combinations(sorted(set(literals)), 2)
            if pair_key(a, b, mode, types) not in cohold}


def build_filters(m: NDRSet, inits: Sequence[State], rng: np.random.Generator, mode: str = LIFTED,
                  n_rollouts: int = 30, rollout_len: int = 25, enabled: bool = True) -> FilterState:
    if not enabled:
        return FilterState(frozenset(), frozenset(), m.fingerprint, mode, False)
    return FilterState(compute_static(m), compute_mutexes(m, inits, n_rollouts, rollout_len, rng, mode),
                       m.fingerprint, mode, True)


def goal_passes(goal: Conjunction, f: FilterState, fingerprint: Optional[str] = None) -> bool:
    if fingerprint is not None and fingerprint != f.fingerprint:
        raise StaleFilterError(f"filter for model {f.fingerprint[:8]} used with model {fingerprint[:8]}")
    if not f.enabled:
        return True
    lits = goal.literals
    if all(l.predicate in f.static_predicates for l in lits):
        return False
    types = {v.name: v.type for v in goal.variables} if f.mode == LIFTED else None
    for a, b in itertools.combinations(lits, 2):
        if a.negated or b.negated:
            continue
        if f.is_mutex(a, b, types):
            return False
    return True


class FilterCache:
    """Recomputes filters only when the model fingerprint changes."""

    def __init__(self, mode: str = LIFTED, n_rollouts: int = 30, rollout_len: int = 25, enabled: bool = True):
        self.mode = mode
        self.n_rollouts = n_rollouts
        self.rollout_len = rollout_len
        self.enabled = enabled
        self.current: Optional[FilterState] = None
        self.recomputes = 0

    def get(self, m: NDRSet, inits: Sequence[State], rng: np.random.Generator) -> FilterState:
        if self.current is None or self.current.fingerprint != m.fingerprint:
            self.current = build_filters(m, inits, rng, self.mode, self.n_rollouts, self.rollout_len, self.enabled)
            self.recomputes += 1
        return self.current
