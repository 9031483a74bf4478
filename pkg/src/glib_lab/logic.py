"""Relational substrate: literals, states, conjunctions, bindings.

Terms are plain strings. Variables start with ``?``; the special token
``?_`` is an anonymous wildcard allowed only inside negated literals, where
it reads "for no object" (``(not (on ?_ ?x))`` means nothing is on ``?x``).
"""
from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence, Tuple

WILDCARD = "?_"
DEFAULT_TYPE = "object"

Binding = Dict[str, str]


class TypingError(ValueError):
    """A variable was bound to an object of an incompatible type."""


def is_var(term: str) -> bool:
    return term[:1] == "?"


@dataclass(frozen=True)
class Predicate:
    name: str
    arity: int
    argument_types: Tuple[str, ...] = ()
    kind: str = "state"  # "state" | "action"

    def __post_init__(self) -> None:
        if self.argument_types and len(self.argument_types) != self.arity:
            raise ValueError(f"arity mismatch for predicate {self.name}")

    def arg_type(self, i: int) -> str:
        return self.argument_types[i] if self.argument_types else DEFAULT_TYPE


class Var(NamedTuple):
    name: str
    type: str = DEFAULT_TYPE


class Obj(NamedTuple):
    name: str
    type: str = DEFAULT_TYPE


class Literal(NamedTuple):
    predicate: str
    args: Tuple[str, ...] = ()
    negated: bool = False

    def __str__(self) -> str:
        inner = "(" + " ".join((self.predicate,) + self.args) + ")"
        return f"(not {inner})" if self.negated else inner

    @property
    def positive(self) -> "Literal":
        return Literal(self.predicate, self.args) if self.negated else self

    def negate(self) -> "Literal":
        return Literal(self.predicate, self.args, not self.negated)

    def is_ground(self) -> bool:
        return not any(is_var(a) for a in self.args)

    def variables(self) -> Tuple[str, ...]:
        return tuple(a for a in self.args if is_var(a) and a != WILDCARD)

    def ground(self, binding: Mapping[str, str]) -> "Literal":
        return Literal(self.predicate, tuple(binding.get(a, a) for a in self.args), self.negated)


def lit(predicate: str, *args: str, negated: bool = False) -> Literal:
    """Convenience constructor; interns names for cheap hashing."""
    return Literal(sys.intern(predicate), tuple(sys.intern(a) for a in args), negated)


def types_compatible(var_type: str, obj_type: str) -> bool:
    return var_type == DEFAULT_TYPE or var_type == obj_type


@dataclass(frozen=True)
class State:
    """Closed-world state: the positive ground literals that hold."""

    literals: frozenset
    objects: frozenset = frozenset()  # of Obj

    def __post_init__(self) -> None:
        if not isinstance(self.literals, frozenset):
            object.__setattr__(self, "literals", frozenset(self.literals))
        if not isinstance(self.objects, frozenset):
            object.__setattr__(self, "objects", frozenset(self.objects))

    def __contains__(self, item: Literal) -> bool:
        return item in self.literals

    def __len__(self) -> int:
        return len(self.literals)

    @cached_property
    def index(self) -> Dict[str, list]:
        idx: Dict[str, list] = {}
        for l in self.literals:
            idx.setdefault(l.predicate, []).append(l.args)
        return idx

    @cached_property
    def object_types(self) -> Dict[str, str]:
        return {o.name: o.type for o in self.objects}

    @cached_property
    def objects_by_type(self) -> Dict[str, Tuple[str, ...]]:
        out: Dict[str, list] = {DEFAULT_TYPE: []}
        for o in sorted(self.objects):
            out.setdefault(o.type, []).append(o.name)
            if o.type != DEFAULT_TYPE:
                out[DEFAULT_TYPE].append(o.name)
        return {k: tuple(sorted(v)) for k, v in out.items()}

    def objects_of(self, type_name: str) -> Tuple[str, ...]:
        return self.objects_by_type.get(type_name, ())

    def with_literals(self, literals: Iterable[Literal]) -> "State":
        return State(frozenset(literals), self.objects)

    def apply(self, effects: Iterable[Literal]) -> "State":
        """Delete negated effects, then add positive ones (PDDL order)."""
        effects = tuple(effects)
        dels = {e.positive for e in effects if e.negated}
        adds = {e for e in effects if not e.negated}
        if not dels and adds <= self.literals:
            return self
        return State((self.literals - dels) | adds, self.objects)

    def sorted_literals(self) -> list:
        return sorted(self.literals)

    def serialize(self) -> str:
        return " ".join(str(l) for l in self.sorted_literals())

    def __repr__(self) -> str:
        return f"State({self.serialize()})"


@dataclass(frozen=True)
class Conjunction:
    literals: Tuple[Literal, ...]
    variables: Tuple[Var, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.literals, tuple):
            object.__setattr__(self, "literals", tuple(self.literals))
        if not isinstance(self.variables, tuple):
            object.__setattr__(self, "variables", tuple(self.variables))
        if len(set(self.literals)) != len(self.literals):
            raise ValueError(f"duplicate literals in conjunction {self.literals}")
        declared = {v.name for v in self.variables}
        for l in self.literals:
            for a in l.variables():
                if a not in declared:
                    raise ValueError(f"variable {a} not quantified in {self}")

    def __len__(self) -> int:
        return len(self.literals)

    def __iter__(self) -> Iterator[Literal]:
        return iter(self.literals)

    def is_ground(self) -> bool:
        return not self.variables

    def __str__(self) -> str:
        body = "(and " + " ".join(str(l) for l in self.literals) + ")"
        if not self.variables:
            return body
        vs = " ".join(v.name if v.type == DEFAULT_TYPE else f"{v.name} - {v.type}" for v in self.variables)
        return f"(exists ({vs}) {body})"


def substitute(c: Conjunction, b: Mapping[str, str],
               object_types: Optional[Mapping[str, str]] = None) -> Conjunction:
    """Replace bound variables; order of literals is kept."""
    var_types = {v.name: v.type for v in c.variables}
    for name, obj in b.items():
        if name not in var_types:
            raise ValueError(f"{name} is not quantified in {c}")
        if object_types is not None and obj in object_types and not is_var(obj):
            if not types_compatible(var_types[name], object_types[obj]):
                raise TypingError(f"{name} - {var_types[name]} cannot take {obj} - {object_types[obj]}")
    return Conjunction(tuple(l.ground(b) for l in c.literals),
                       tuple(v for v in c.variables if v.name not in b))


def _literal_true(l: Literal, binding: Mapping[str, str], state: State) -> bool:
    args = tuple(binding.get(a, a) for a in l.args)
    if l.predicate == "=":
        return (args[0] == args[1]) != l.negated
    if WILDCARD in args:
        # wildcard only meaningful negated: "no object fills the slot"
        rows = state.index.get(l.predicate, ())
        hit = any(all(x == WILDCARD or x == y for x, y in zip(args, row)) for row in rows)
        return hit != l.negated
    return (Literal(l.predicate, args) in state.literals) != l.negated


def find_bindings(c: Conjunction, state: State, initial: Optional[Mapping[str, str]] = None,
                  distinct: bool = False) -> Iterator[Binding]:
    """Yield satisfying bindings of ``c``'s variables, lexicographic in variable order.

    ``initial`` pre-binds some variables (e.g. action arguments); it is merged
    into every yielded binding. ``distinct`` forces an injective binding.
    """
    binding: Binding = dict(initial) if initial else {}
    free = [v for v in c.variables if v.name not in binding]
    order = {v.name: i for i, v in enumerate(free)}
    # a literal is checked as soon as its last free variable is assigned
    checks: list = [[] for _ in range(len(free) + 1)]
    for l in c.literals:
        pos = max((order[a] for a in l.variables() if a in order), default=-1)
        checks[pos + 1].append(l)
    for l in checks[0]:
        if not _literal_true(l, binding, state):
            return
    if not free:
        yield dict(binding)
        return
    types = state.object_types

    def candidates(i: int) -> Sequence[str]:
        var = free[i]
        for l in checks[i + 1]:
            if l.negated or WILDCARD in l.args or l.predicate == "=":
                continue
            rows = state.index.get(l.predicate, ())
            vals = set()
            for row in rows:
                ok = True
                val = None
                for a, x in zip(l.args, row):
                    if a == var.name:
                        if val is not None and val != x:
                            ok = False
                            break
                        val = x
                    elif is_var(a):
                        if a in binding and binding[a] != x:
                            ok = False
                            break
                    elif a != x:
                        ok = False
                        break
                if ok and val is not None:
                    vals.add(val)
            return sorted(v for v in vals if types_compatible(var.type, types.get(v, DEFAULT_TYPE)))
        return state.objects_of(var.type)

    used = set(binding.values()) if distinct else None

    def rec(i: int) -> Iterator[Binding]:
        var = free[i].name
        for val in candidates(i):
            if distinct and val in used:
                continue
            binding[var] = val
            if all(_literal_true(l, binding, state) for l in checks[i + 1]):
                if i + 1 == len(free):
                    yield dict(binding)
                else:
                    if distinct:
                        used.add(val)
                    yield from rec(i + 1)
                    if distinct:
                        used.discard(val)
            del binding[var]

    yield from rec(0)


def first_binding(c: Conjunction, state: State, initial: Optional[Mapping[str, str]] = None,
                  distinct: bool = False) -> Optional[Binding]:
    return next(find_bindings(c, state, initial, distinct), None)


def holds(c: Conjunction, state: State, distinct: bool = False) -> bool:
    return first_binding(c, state, distinct=distinct) is not None


# --- canonical lifted forms -------------------------------------------------

CanonicalKey = Tuple


def canonical_key(literals: Iterable[Literal], types: Optional[Mapping[str, str]] = None) -> CanonicalKey:
    """Order- and renaming-invariant key for a small literal set.

    Every non-wildcard term is treated as renameable. The key is the least,
    over literal orderings, of the first-appearance renaming.
    """
    lits = sorted(set(literals))
    if len(lits) == 1:
        l = lits[0]
        seen: Dict[str, int] = {}
        args = tuple(seen.setdefault(a, len(seen)) if a != WILDCARD else -1 for a in l.args)
        tys = tuple((types or {}).get(a, DEFAULT_TYPE) for a in seen)
        return ((l.negated, l.predicate, args),), tys
    best = None
    for perm in itertools.permutations(lits):
        seen = {}
        body = tuple((l.negated, l.predicate,
                      tuple(seen.setdefault(a, len(seen)) if a != WILDCARD else -1 for a in l.args))
                     for l in perm)
        tys = tuple((types or {}).get(a, DEFAULT_TYPE) for a in seen)
        key = (body, tys)
        if best is None or key < best:
            best = key
    return best


def conjunction_from_key(key: CanonicalKey) -> Conjunction:
    body, tys = key
    names = [f"?x{i}" for i in range(len(tys))]
    lits = tuple(Literal(p, tuple(names[i] if i >= 0 else WILDCARD for i in args), neg)
                 for neg, p, args in body)
    return Conjunction(lits, tuple(Var(n, t) for n, t in zip(names, tys)))


def canonical_lift(literals: Iterable[Literal], types: Optional[Mapping[str, str]] = None) -> Conjunction:
    """Lift ground literals to the canonical existential conjunction."""
    return conjunction_from_key(canonical_key(literals, types))


def conjunction_key(c: Conjunction) -> CanonicalKey:
    return canonical_key(c.literals, {v.name: v.type for v in c.variables})


# --- s-expression helpers ---------------------------------------------------

def parse_literal(text: str) -> Literal:
    """Parse ``(on a b)`` or ``(not (on a b))``."""
    toks = text.replace("(", " ( ").replace(")", " ) ").split()
    if toks[:3] == ["(", "not", "("]:
        inner = toks[3:-2]
        return lit(inner[0], *inner[1:], negated=True)
    return lit(toks[1], *toks[2:-1])


def make_state(literals: Iterable, objects: Optional[Iterable] = None) -> State:
    """Build a state from literal strings/Literals; objects default to those mentioned."""
    ls = frozenset(parse_literal(l) if isinstance(l, str) else l for l in literals)
    if objects is None:
        objs = {Obj(a) for l in ls for a in l.args}
    else:
        objs = {o if isinstance(o, Obj) else Obj(o) for o in objects}
    return State(ls, frozenset(objs))
