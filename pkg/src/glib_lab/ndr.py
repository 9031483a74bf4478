"""Noisy deictic rules: covering, prediction, sampling, ground-truth compilation."""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .logic import (Binding, Conjunction, Literal, Predicate, State, Var, first_binding, is_var,
                    types_compatible)


class ModelInvalidError(Exception):
    """More than one non-default rule covers a state-action pair, or a rule is malformed."""


class _Noise:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "NOISE"

    def __reduce__(self):
        return (_Noise, ())


NOISE = _Noise()


class _NoPrediction:
    def __repr__(self) -> str:
        return "NO_PREDICTION"

    def __reduce__(self):
        return (_get_no_prediction, ())


NO_PREDICTION = _NoPrediction()


def _get_no_prediction():
    return NO_PREDICTION


Effect = Tuple[Literal, ...]
Outcome = Tuple[float, Union[Effect, _Noise]]


@dataclass(frozen=True)
class NDR:
    action: Literal
    preconditions: Conjunction
    outcomes: Tuple[Outcome, ...]
    is_default: bool = False

    def __post_init__(self) -> None:
        total = sum(p for p, _ in self.outcomes)
        if abs(total - 1.0) > 1e-9:
            raise ModelInvalidError(f"outcome probabilities sum to {total} in {self.action}")
        if any(p < 0 or p > 1 + 1e-12 for p, _ in self.outcomes):
            raise ModelInvalidError("outcome probability outside [0,1]")
        if sum(1 for _, e in self.outcomes if e is NOISE) > 1:
            raise ModelInvalidError("more than one noise outcome")
        scope = set(self.action.variables()) | {v.name for v in self.preconditions.variables}
        for _, eff in self.outcomes:
            if eff is NOISE:
                continue
            for l in eff:
                for a in l.variables():
                    if a not in scope:
                        raise ModelInvalidError(f"effect variable {a} out of deictic scope")

    @property
    def noise_prob(self) -> float:
        return sum(p for p, e in self.outcomes if e is NOISE)

    @property
    def complexity(self) -> int:
        return len(self.preconditions) + sum(len(e) for _, e in self.outcomes if e is not NOISE)

    def action_binding(self, action: Literal, object_types: Mapping[str, str]) -> Optional[Binding]:
        if action.predicate != self.action.predicate or len(action.args) != len(self.action.args):
            return None
        types = {v.name: v.type for v in self.preconditions.variables}
        b: Binding = {}
        for var, obj in zip(self.action.args, action.args):
            if not is_var(var):
                if var != obj:
                    return None
                continue
            if var in b:
                if b[var] != obj:
                    return None
                continue
            if not types_compatible(types.get(var, "object"), object_types.get(obj, "object")):
                return None
            b[var] = obj
        return b

    def cover(self, state: State, action: Literal) -> Optional[Binding]:
        """First binding under which this rule covers (state, action), if any."""
        init = self.action_binding(action, state.object_types)
        if init is None:
            return None
        if self.is_default:
            return init
        return first_binding(self.preconditions, state, init)

    def __str__(self) -> str:
        outs = ", ".join(f"{p:.3f}: " + ("NOISE" if e is NOISE else " ".join(map(str, e)) or "{}")
                         for p, e in self.outcomes)
        pre = " ".join(map(str, self.preconditions.literals))
        return f"{self.action} :- {pre or 'true'} => [{outs}]"


def default_rule(pred: Predicate) -> NDR:
    vs = tuple(Var(f"?a{i}", pred.arg_type(i)) for i in range(pred.arity))
    return NDR(Literal(pred.name, tuple(v.name for v in vs)), Conjunction((), vs), ((1.0, ()),), True)


@dataclass(frozen=True)
class NDRSet:
    """Per action predicate: non-default rules plus one default rule."""

    predicates: Tuple[Predicate, ...]
    action_predicates: Tuple[Predicate, ...]
    rules: Mapping[str, Tuple[NDR, ...]]

    @classmethod
    def empty(cls, predicates: Iterable[Predicate], action_predicates: Iterable[Predicate]) -> "NDRSet":
        aps = tuple(sorted(action_predicates, key=lambda p: p.name))
        return cls(tuple(sorted(predicates, key=lambda p: p.name)), aps, {p.name: () for p in aps})

    def __hash__(self) -> int:
        return hash(self.fingerprint)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, NDRSet) and self.fingerprint == other.fingerprint

    @cached_property
    def defaults(self) -> Dict[str, NDR]:
        return {p.name: default_rule(p) for p in self.action_predicates}

    @cached_property
    def action_predicate_map(self) -> Dict[str, Predicate]:
        return {p.name: p for p in self.action_predicates}

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha1()
        for name in sorted(self.rules):
            for r in self.rules[name]:
                h.update(str(r).encode())
                h.update(repr(r.preconditions.variables).encode())
            h.update(b"|")
        return h.hexdigest()

    def with_rules(self, action: str, rules: Sequence[NDR]) -> "NDRSet":
        new = dict(self.rules)
        new[action] = tuple(rules)
        return NDRSet(self.predicates, self.action_predicates, new)

    def all_rules(self) -> List[NDR]:
        return [r for name in sorted(self.rules) for r in self.rules[name]]

    def __str__(self) -> str:
        return "\n".join(str(r) for r in self.all_rules()) or "<default rules only>"


def covering_rule(m: NDRSet, s: State, a: Literal) -> Tuple[NDR, Binding]:
    if a.predicate not in m.rules:
        raise KeyError(f"action predicate {a.predicate} not registered")
    found: Optional[Tuple[NDR, Binding]] = None
    for r in m.rules[a.predicate]:
        b = r.cover(s, a)
        if b is not None:
            if found is not None:
                raise ModelInvalidError(f"rules {found[0]} and {r} both cover {a}")
            found = (r, b)
    if found is not None:
        return found
    d = m.defaults[a.predicate]
    b = d.action_binding(a, s.object_types)
    return d, b if b is not None else {}


def _ground_effect(eff: Effect, b: Binding) -> Effect:
    out = []
    for l in eff:
        g = l.ground(b)
        if any(is_var(x) for x in g.args):
            raise ModelInvalidError(f"unbound variable in effect {l}")
        out.append(g)
    return tuple(out)


def predict_distribution(m: NDRSet, s: State, a: Literal) -> List[Tuple[float, Union[State, _Noise]]]:
    rule, b = covering_rule(m, s, a)
    merged: Dict[object, float] = {}
    for p, eff in rule.outcomes:
        key = NOISE if eff is NOISE else s.apply(_ground_effect(eff, b))
        merged[key] = merged.get(key, 0.0) + p
    return [(p, k) for k, p in merged.items()]


def most_likely_next(m: NDRSet, s: State, a: Literal):
    dist = predict_distribution(m, s, a)
    best = max(p for p, _ in dist)
    top = [x for p, x in dist if abs(p - best) <= 1e-12]
    concrete = [x for x in top if x is not NOISE]
    if not concrete:
        return NO_PREDICTION
    if len(concrete) == 1:
        return concrete[0]
    return min(concrete, key=lambda st: st.serialize())


def sample_next(m: NDRSet, s: State, a: Literal, rng: np.random.Generator) -> State:
    rule, b = covering_rule(m, s, a)
    u = rng.random()
    acc = 0.0
    chosen = rule.outcomes[-1][1]
    for p, eff in rule.outcomes:
        acc += p
        if u < acc:
            chosen = eff
            break
    if chosen is NOISE:
        return s
    return s.apply(_ground_effect(chosen, b))


def ground_actions(action_predicates: Sequence[Predicate], state: State) -> List[Literal]:
    """Every type-respecting instantiation of every action predicate, in sorted order."""
    out: List[Literal] = []
    for p in sorted(action_predicates, key=lambda p: p.name):
        domains = [state.objects_of(p.arg_type(i)) for i in range(p.arity)]
        for combo in itertools.product(*domains):
            out.append(Literal(p.name, combo))
    return out


def _disjoint(r1: NDR, r2: NDR) -> bool:
    """Syntactic disjointness: a complementary precondition pair after aligning action arguments."""
    ren = {b: a for a, b in zip(r1.action.args, r2.action.args) if is_var(a) and is_var(b)}
    pre1 = set(r1.preconditions.literals)
    for l in r2.preconditions.literals:
        if all(x in ren for x in l.variables()):
            if l.ground(ren).negate() in pre1:
                return True
    return False


def compile_ground_truth(d, allow_noise: bool = False) -> NDRSet:
    """One NDR per operator of a parsed domain, plus identity default rules."""
    rules: Dict[str, List[NDR]] = {name: [] for name in d.action_predicates}
    for op in d.operators:
        if op.is_default:
            continue
        if op.noise_outcome is not None and not allow_noise:
            raise ModelInvalidError(f"operator {op.name} carries a learned noise outcome; "
                                    "read it with read_ndrs instead")
        outs = tuple((p, NOISE if i == op.noise_outcome else eff) for i, (p, eff) in enumerate(op.outcomes))
        variables = list(op.parameters)
        known = {v.name for v in variables}
        for a in op.action.args:
            if is_var(a) and a not in known:
                variables.append(Var(a))
                known.add(a)
        pre = Conjunction(op.preconditions.literals, tuple(variables))
        rules.setdefault(op.action.predicate, []).append(NDR(op.action, pre, outs))
    for name, rs in rules.items():
        for r1, r2 in itertools.combinations(rs, 2):
            if not _disjoint(r1, r2):
                raise ModelInvalidError(f"overlapping operators for action {name}")
    return NDRSet(tuple(sorted(d.predicates.values(), key=lambda p: p.name)),
                  tuple(sorted(d.action_predicates.values(), key=lambda p: p.name)),
                  {k: tuple(v) for k, v in rules.items()})
