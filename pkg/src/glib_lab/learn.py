"""Greedy LNDR-style rule learning with warm start and retrain-on-surprise."""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .logic import Binding, Conjunction, Literal, Predicate, State, Var
from .ndr import NDR, NOISE, NO_PREDICTION, ModelInvalidError, NDRSet, covering_rule, most_likely_next

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Transition:
    s: State
    a: Literal
    s_next: State

    @property
    def is_identity(self) -> bool:
        return self.s.literals == self.s_next.literals


class Dataset:
    """Append-only transitions grouped by action predicate, with duplicate counts."""

    def __init__(self, transitions: Iterable[Transition] = ()):
        self._unique: Dict[str, List[Transition]] = {}
        self._counts: Dict[str, List[int]] = {}
        self._pos: Dict[Transition, int] = {}
        self.total = 0
        for t in transitions:
            self.add(t)

    def add(self, t: Transition) -> None:
        name = t.a.predicate
        self.total += 1
        i = self._pos.get(t)
        if i is not None:
            self._counts[name][i] += 1
            return
        lst = self._unique.setdefault(name, [])
        self._pos[t] = len(lst)
        lst.append(t)
        self._counts.setdefault(name, []).append(1)

    def __len__(self) -> int:
        return self.total

    def actions(self) -> List[str]:
        return sorted(self._unique)

    def unique(self, action: str) -> List[Transition]:
        return self._unique.get(action, [])

    def counts(self, action: str) -> List[int]:
        return self._counts.get(action, [])

    def __iter__(self):
        for name in self.actions():
            for t, c in zip(self._unique[name], self._counts[name]):
                for _ in range(c):
                    yield t


@dataclass
class LearnerConfig:
    complexity_penalty: float = 0.5
    noise_floor: float = 1e-8
    max_search_iters: int = 1000
    time_budget: float = 180.0
    max_explain_per_iter: int = 4


def should_retrain(m: NDRSet, t: Transition) -> bool:
    pred = most_likely_next(m, t.s, t.a)
    return pred is NO_PREDICTION or pred.literals != t.s_next.literals


# --- likelihood pieces -----------------------------------------------------

def _default_ll(t: Transition, p_min: float) -> float:
    return 0.0 if t.is_identity else math.log(p_min)


def _lift_delta(t: Transition, b: Binding, variables: Sequence[Var]) -> Optional[Tuple[Literal, ...]]:
    inv: Dict[str, str] = {}
    for v in variables:
        o = b.get(v.name)
        if o is not None and o not in inv:
            inv[o] = v.name
    out = []
    for l in t.s_next.literals - t.s.literals:
        try:
            out.append(Literal(l.predicate, tuple(inv[a] for a in l.args)))
        except KeyError:
            return None
    for l in t.s.literals - t.s_next.literals:
        try:
            out.append(Literal(l.predicate, tuple(inv[a] for a in l.args), True))
        except KeyError:
            return None
    return tuple(sorted(out))


def _explains(eff: Tuple[Literal, ...], t: Transition, b: Binding) -> bool:
    ground = [l.ground(b) for l in eff]
    return t.s.apply(ground).literals == t.s_next.literals


def _estimate(covered: Sequence[Tuple[Transition, Binding, int]], variables: Sequence[Var],
              p_min: float):
    """Outcomes, per-transition explanation sets, and noise assignment for one rule."""
    cands: List[Tuple[Literal, ...]] = []
    seen = set()
    for t, b, _ in covered:
        d = _lift_delta(t, b, variables)
        if d is not None and d not in seen:
            seen.add(d)
            cands.append(d)
    cover = [[_explains(o, t, b) for o in cands] for t, b, _ in covered]
    weight = [sum(w for (_, _, w), row in zip(covered, cover) if row[j]) for j in range(len(cands))]
    alive = [True] * len(cands)
    for j in sorted(range(len(cands)), key=lambda j: (weight[j], len(cands[j]), cands[j])):
        others = [k for k in range(len(cands)) if alive[k] and k != j]
        if all(any(row[k] for k in others) for row in cover if row[j]):
            alive[j] = False
    counts = [0] * len(cands)
    noise = 0
    for (t, b, w), row in zip(covered, cover):
        opts = [j for j in range(len(cands)) if alive[j] and row[j]]
        if not opts:
            noise += w
            continue
        j = max(opts, key=lambda j: (weight[j], len(cands[j]), [str(l) for l in cands[j]]))
        counts[j] += w
    total = sum(counts) + noise
    if total == 0:
        return ((1.0, NOISE),), cover, alive, []
    probs = {j: counts[j] / total for j in range(len(cands)) if counts[j] > 0}
    p_noise = noise / total
    if p_noise < p_min:
        scale = (1.0 - p_min) / sum(probs.values())
        probs = {j: p * scale for j, p in probs.items()}
        p_noise = p_min
    outcomes = tuple((probs[j], cands[j]) for j in sorted(probs)) + ((p_noise, NOISE),)
    return outcomes, cover, alive, [j for j in sorted(probs)]


def estimate_outcome_probs(rule: NDR, covered: Sequence[Transition], p_min: float = 1e-8):
    """Re-estimate a rule's outcome distribution from the transitions it covers."""
    rows = []
    for t in covered:
        b = rule.cover(t.s, t.a)
        if b is None:
            raise ValueError(f"transition {t.a} not covered by rule")
        rows.append((t, b, 1))
    outcomes, _, _, _ = _estimate(rows, rule.preconditions.variables, p_min)
    return outcomes


def rule_loglik(rule: NDR, t: Transition, b: Binding, p_min: float) -> float:
    p = 0.0
    for q, eff in rule.outcomes:
        if eff is NOISE:
            p += q * p_min
        elif _explains(eff, t, b):
            p += q
    return math.log(p) if p > 0 else -math.inf


def score(m: NDRSet, data: Dataset, cfg: Optional[LearnerConfig] = None) -> float:
    """Penalized log-likelihood of the data under the model's own outcome probabilities."""
    cfg = cfg or LearnerConfig()
    total = 0.0
    for name in data.actions():
        for t, c in zip(data.unique(name), data.counts(name)):
            rule, b = covering_rule(m, t.s, t.a)
            if rule.is_default:
                total += c * _default_ll(t, cfg.noise_floor)
            else:
                total += c * rule_loglik(rule, t, b, cfg.noise_floor)
    return total - cfg.complexity_penalty * sum(r.complexity for r in m.all_rules())


# --- search ----------------------------------------------------------------

RuleKey = Tuple[Literal, Tuple[Literal, ...], Tuple[Var, ...]]


def _prune_vars(action: Literal, pre: Sequence[Literal], variables: Sequence[Var]) -> Tuple[Var, ...]:
    used = set(action.variables())
    for l in pre:
        used.update(l.variables())
    return tuple(v for v in variables if v.name in used)


class _RuleStats:
    __slots__ = ("key", "rule_template", "processed", "bindings", "mask", "version", "_fit")

    def __init__(self, key: RuleKey):
        self.key = key
        action, pre, variables = key
        self.rule_template = NDR(action, Conjunction(pre, variables), ((1.0, NOISE),))
        self.processed = 0
        self.bindings: Dict[int, Binding] = {}
        self.mask = 0
        self.version = -1
        self._fit = None


class _ActionSearch:
    """Per-action-predicate cache of rule coverage over the (growing) data."""

    def __init__(self, name: str, cfg: LearnerConfig):
        self.name = name
        self.cfg = cfg
        self.stats: Dict[RuleKey, _RuleStats] = {}
        self.transitions: List[Transition] = []
        self.counts: List[int] = []
        self.default_ll: List[float] = []

    def sync(self, data: Dataset) -> None:
        ts = data.unique(self.name)
        self.counts = list(data.counts(self.name))
        for t in ts[len(self.transitions):]:
            self.transitions.append(t)
            self.default_ll.append(_default_ll(t, self.cfg.noise_floor))
        self.version = (len(self.transitions), sum(self.counts))

    def get(self, key: RuleKey, restrict: Optional[Iterable[int]] = None) -> _RuleStats:
        st = self.stats.get(key)
        if st is None:
            st = _RuleStats(key)
            self.stats[key] = st
            if restrict is not None:
                # coverage can only shrink relative to the parent rule
                for i in restrict:
                    t = self.transitions[i]
                    b = st.rule_template.cover(t.s, t.a)
                    if b is not None:
                        st.bindings[i] = b
                        st.mask |= 1 << i
                st.processed = len(self.transitions)
        for i in range(st.processed, len(self.transitions)):
            t = self.transitions[i]
            b = st.rule_template.cover(t.s, t.a)
            if b is not None:
                st.bindings[i] = b
                st.mask |= 1 << i
        st.processed = len(self.transitions)
        return st

    def fit(self, st: _RuleStats):
        """(loglik, default loglik of covered, complexity, outcomes, noise indices)."""
        if st.version == self.version and st._fit is not None:
            return st._fit
        covered = [(self.transitions[i], b, self.counts[i]) for i, b in sorted(st.bindings.items())]
        idx = sorted(st.bindings)
        variables = st.key[2]
        outcomes, cover, alive, kept = _estimate(covered, variables, self.cfg.noise_floor)
        p_min = self.cfg.noise_floor
        p_noise = outcomes[-1][0]
        pj = {j: p for j, (p, _) in zip(kept, outcomes[:-1])}
        ll = 0.0
        noise_idx = []
        for (t, b, w), row, i in zip(covered, cover, idx):
            p = p_noise * p_min + sum(pj.get(j, 0.0) for j, ok in enumerate(row) if ok)
            ll += w * math.log(p)
            if not any(row[j] for j in kept):
                noise_idx.append(i)
        dll = sum(self.default_ll[i] * self.counts[i] for i in idx)
        complexity = len(st.key[1]) + sum(len(e) for _, e in outcomes if e is not NOISE)
        st._fit = (ll, dll, complexity, outcomes, noise_idx)
        st.version = self.version
        return st._fit

    def set_score(self, keys: Sequence[RuleKey]) -> Optional[float]:
        mask = 0
        total = sum(d * c for d, c in zip(self.default_ll, self.counts))
        for k in keys:
            st = self.get(k)
            if mask & st.mask:
                return None
            mask |= st.mask
            ll, dll, cx, _, _ = self.fit(st)
            total += ll - dll - self.cfg.complexity_penalty * cx
        return total

    def to_rules(self, keys: Sequence[RuleKey]) -> Tuple[NDR, ...]:
        out = []
        for k in keys:
            st = self.get(k)
            _, _, _, outcomes, _ = self.fit(st)
            action, pre, variables = k
            out.append(NDR(action, Conjunction(pre, variables), outcomes))
        return tuple(out)

    # neighbourhood -----------------------------------------------------

    def unexplained(self, keys: Sequence[RuleKey]) -> List[int]:
        covered = 0
        out = []
        for k in keys:
            st = self.get(k)
            covered |= st.mask
            out.extend(self.fit(st)[4])
        for i, t in enumerate(self.transitions):
            if not (covered >> i) & 1 and not t.is_identity:
                out.append(i)
        out = sorted(set(out), key=lambda i: (-self.counts[i], i))
        return out

    def explain(self, i: int) -> RuleKey:
        t = self.transitions[i]
        types = t.s.object_types
        names: Dict[str, str] = {}
        variables: List[Var] = []

        def var_for(o: str) -> str:
            if o not in names:
                names[o] = f"?x{len(names)}"
                variables.append(Var(names[o], types.get(o, "object")))
            return names[o]

        action = Literal(t.a.predicate, tuple(var_for(o) for o in t.a.args))
        delta = (t.s_next.literals - t.s.literals) | (t.s.literals - t.s_next.literals)
        for l in sorted(delta):
            for o in l.args:
                var_for(o)
        pre = tuple(sorted(Literal(l.predicate, tuple(names[o] for o in l.args))
                           for l in t.s.literals if all(o in names for o in l.args)))
        return (action, pre, _prune_vars(action, pre, variables))

    def add_candidates(self, key: RuleKey, predicates: Sequence[Predicate]) -> List[Tuple[Literal, Optional[Var]]]:
        """Literals that split the rule's current coverage; at most one fresh deictic variable."""
        action, pre, variables = key
        st = self.get(key)
        if not st.bindings:
            return []
        have = set(pre)
        out: List[Tuple[Literal, Optional[Var]]] = []
        fresh = f"?x{len(variables)}"
        while any(v.name == fresh for v in variables):
            fresh += "_"
        covered = [(self.transitions[i], b) for i, b in sorted(st.bindings.items())]
        for p in predicates:
            pools = []
            for j in range(p.arity):
                want = p.arg_type(j)
                pools.append([v.name for v in variables if want == "object" or v.type == want] + [fresh])
            for args in itertools.product(*pools):
                n_fresh = args.count(fresh)
                if n_fresh > 1 or (n_fresh == 1 and p.arity < 2):
                    continue
                for neg in ((False, True) if n_fresh == 0 else (False,)):
                    l = Literal(p.name, tuple(args), neg)
                    if l in have or l.negate() in have:
                        continue
                    if n_fresh:
                        k = args.index(fresh)
                        vals = set()
                        for t, b in covered:
                            rows = t.s.index.get(p.name, ())
                            vals.add(any(all(j == k or row[j] == b[a] for j, a in enumerate(args)) for row in rows))
                            if len(vals) == 2:
                                break
                        if len(vals) == 2:
                            out.append((l, Var(fresh, p.arg_type(k))))
                        continue
                    vals = set()
                    for t, b in covered:
                        vals.add((Literal(p.name, tuple(b[a] for a in args)) in t.s.literals) != neg)
                        if len(vals) == 2:
                            break
                    if len(vals) == 2:
                        out.append((l, None))
        return out

    def neighbours(self, keys: List[RuleKey], predicates: Sequence[Predicate]):
        """Yield (candidate keys, new key or None, restrict set for the new key)."""
        for i in self.unexplained(keys)[: self.cfg.max_explain_per_iter]:
            nk = self.explain(i)
            if nk in keys:
                continue
            st = self.get(nk)
            kept = [k for k in keys if not (self.get(k).mask & st.mask)]
            yield kept + [nk]
        for j in range(len(keys)):
            yield keys[:j] + keys[j + 1:]
        for j, k in enumerate(keys):
            action, pre, variables = k
            for li in range(len(pre)):
                npre = pre[:li] + pre[li + 1:]
                nk = (action, npre, _prune_vars(action, npre, variables))
                yield keys[:j] + [nk] + keys[j + 1:]
            parent_cov = list(self.get(k).bindings)
            for l, fresh in self.add_candidates(k, predicates):
                npre = tuple(sorted(pre + (l,)))
                nk = (action, npre, variables + ((fresh,) if fresh else ()))
                if nk not in self.stats:
                    self.get(nk, restrict=parent_cov)
                yield keys[:j] + [nk] + keys[j + 1:]


class LNDRLearner:
    """Stateful wrapper so rule coverage is cached across incremental calls."""

    def __init__(self, cfg: Optional[LearnerConfig] = None):
        self.cfg = cfg or LearnerConfig()
        self._searches: Dict[str, _ActionSearch] = {}
        self.calls = 0

    def learn(self, data: Dataset, warm_start: Optional[NDRSet] = None,
              predicates: Sequence[Predicate] = (), action_predicates: Sequence[Predicate] = ()) -> NDRSet:
        self.calls += 1
        if warm_start is not None:
            model = warm_start
            predicates = predicates or warm_start.predicates
        else:
            model = NDRSet.empty(predicates, action_predicates)
        deadline = time.monotonic() + self.cfg.time_budget
        for name in data.actions():
            if name not in model.rules:
                continue
            search = self._searches.setdefault(name, _ActionSearch(name, self.cfg))
            search.sync(data)
            start = [(r.action, r.preconditions.literals, r.preconditions.variables) for r in model.rules[name]]
            keys = self._hill_climb(search, start, predicates, deadline)
            model = model.with_rules(name, search.to_rules(keys))
        if warm_start is not None:
            try:
                warm_score = score(warm_start, data, self.cfg)
            except ModelInvalidError:
                warm_score = -math.inf
            try:
                new_score = score(model, data, self.cfg)
            except ModelInvalidError:
                new_score = -math.inf
            if warm_score > new_score:
                return warm_start
        return model

    def _hill_climb(self, search: _ActionSearch, keys: List[RuleKey], predicates: Sequence[Predicate],
                    deadline: float) -> List[RuleKey]:
        # drop rules that overlap an earlier one on the data
        valid: List[RuleKey] = []
        mask = 0
        for k in keys:
            st = search.get(k)
            if not (st.mask & mask):
                valid.append(k)
                mask |= st.mask
        keys = valid
        best = search.set_score(keys)
        for _ in range(self.cfg.max_search_iters):
            if time.monotonic() > deadline:
                log.info("learner time budget hit for %s", search.name)
                break
            improved = None
            improved_score = best
            for cand in search.neighbours(keys, predicates):
                sc = search.set_score(cand)
                if sc is not None and sc > improved_score + 1e-9:
                    improved, improved_score = cand, sc
                if time.monotonic() > deadline:
                    break
            if improved is None:
                break
            keys, best = improved, improved_score
        return keys


def learn(data: Dataset, warm_start: Optional[NDRSet] = None, cfg: Optional[LearnerConfig] = None,
          predicates: Sequence[Predicate] = (), action_predicates: Sequence[Predicate] = ()) -> NDRSet:
    """One-shot learning call (no cross-call cache)."""
    return LNDRLearner(cfg).learn(data, warm_start, predicates, action_predicates)
