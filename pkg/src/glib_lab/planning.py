"""Single-outcome determinization, FF-style greedy best-first search, and replanning execution."""
from __future__ import annotations

import heapq
import itertools
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .logic import (WILDCARD, Binding, Conjunction, Literal, State, Var, find_bindings, first_binding, holds, is_var)
from .ndr import NDR, NOISE, NDRSet

DEFAULT_TIMEOUT = 10.0
DEFAULT_MAX_EXPANSIONS = 2000


@dataclass(frozen=True)
class DetRule:
    action: Literal
    preconditions: Conjunction
    effects: Tuple[Literal, ...]


@dataclass(frozen=True)
class DeterminizedModel:
    rules: Dict[str, Tuple[DetRule, ...]]
    fingerprint: str

    def __hash__(self) -> int:
        return hash(self.fingerprint)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DeterminizedModel) and other.fingerprint == self.fingerprint

    def all_rules(self) -> List[DetRule]:
        return [r for k in sorted(self.rules) for r in self.rules[k]]


def _best_outcome(r: NDR) -> Optional[Tuple[Literal, ...]]:
    concrete = [(p, e) for p, e in r.outcomes if e is not NOISE]
    if not concrete:
        return None
    return max(concrete, key=lambda pe: (pe[0], len(pe[1]), tuple(sorted(str(l) for l in pe[1]))))[1]


def determinize(m: NDRSet) -> DeterminizedModel:
    rules: Dict[str, Tuple[DetRule, ...]] = {}
    for name, rs in m.rules.items():
        det = []
        for r in rs:
            eff = _best_outcome(r)
            if eff is not None:
                det.append(DetRule(r.action, r.preconditions, eff))
        rules[name] = tuple(det)
    return DeterminizedModel(rules, "det:" + m.fingerprint)


def det_step(dm: DeterminizedModel, s: State, a: Literal) -> State:
    """Successor in the determinized model via first-binding covering; identity if nothing covers."""
    for r in dm.rules.get(a.predicate, ()):
        init = NDR.action_binding(_as_ndr(r), a, s.object_types)
        if init is None:
            continue
        b = first_binding(r.preconditions, s, init)
        if b is not None:
            return s.apply(tuple(l.ground(b) for l in r.effects))
    return s


_NDR_CACHE: Dict[DetRule, NDR] = {}


def _as_ndr(r: DetRule) -> NDR:
    n = _NDR_CACHE.get(r)
    if n is None:
        n = NDR(r.action, r.preconditions, ((1.0, r.effects),))
        _NDR_CACHE[r] = n
    return n


def simulate(dm: DeterminizedModel, s: State, actions: Sequence[Literal]) -> List[State]:
    out = [s]
    for a in actions:
        s = det_step(dm, s, a)
        out.append(s)
    return out


# --- grounding -------------------------------------------------------------

def _rule_vars(r: DetRule):
    """Action variables first so groundings enumerate per action in covering order."""
    known = {v.name: v for v in r.preconditions.variables}
    head = [known.get(a) or Var(a) for a in dict.fromkeys(r.action.args) if is_var(a)]
    names = {v.name for v in head}
    return tuple(head) + tuple(v for v in r.preconditions.variables if v.name not in names)


class _GroundTask:
    """Bitmask encoding of a determinized model over one object universe."""

    def __init__(self, dm: DeterminizedModel, s: State):
        self.facts: List[Literal] = []
        self.fact_id: Dict[Literal, int] = {}
        changing = {l.predicate for r in dm.all_rules() for l in r.effects}
        ops = []  # (action, pos, neg, add, dele, pos_list, add_list)
        for r in dm.all_rules():
            static = [l for l in r.preconditions.literals
                      if l.predicate not in changing and WILDCARD not in l.args]
            dynamic = [l for l in r.preconditions.literals if l not in static]
            bad = False
            static_conj = Conjunction(tuple(static), _rule_vars(r))
            for b in find_bindings(static_conj, s):
                act = r.action.ground(b)
                pos, neg = 0, 0
                for l in dynamic:
                    g = l.ground(b)
                    if g.predicate == "=":
                        if (g.args[0] == g.args[1]) == g.negated:
                            bad = True
                            break
                        continue
                    if WILDCARD in g.args:
                        for row in self._expand_wildcard(g, s):
                            neg |= 1 << self._fid(row)
                        continue
                    if g.negated:
                        neg |= 1 << self._fid(g.positive)
                    else:
                        pos |= 1 << self._fid(g)
                if bad:
                    bad = False
                    continue
                add, dele = 0, 0
                for e in r.effects:
                    g = e.ground(b)
                    if g.negated:
                        dele |= 1 << self._fid(g.positive)
                    else:
                        add |= 1 << self._fid(g)
                ops.append((act, pos, neg, add, dele))
        self.state_objects = s.objects
        # first applicable grounding per ground action wins (covering semantics)
        self.groups: Dict[Literal, List[int]] = {}
        self.ops = ops
        for i, op in enumerate(ops):
            self.groups.setdefault(op[0], []).append(i)
        self.actions = sorted(self.groups)
        self.op_pos_list = [self._bits(op[1]) for op in ops]

    def _expand_wildcard(self, g: Literal, s: State) -> List[Literal]:
        pools = [s.objects_of("object") if a == WILDCARD else (a,) for a in g.args]
        return [Literal(g.predicate, tuple(c)) for c in itertools.product(*pools)]

    def _fid(self, l: Literal) -> int:
        i = self.fact_id.get(l)
        if i is None:
            i = len(self.facts)
            self.facts.append(l)
            self.fact_id[l] = i
        return i

    @staticmethod
    def _bits(mask: int) -> List[int]:
        out = []
        i = 0
        while mask:
            if mask & 1:
                out.append(i)
            mask >>= 1
            i += 1
        return out

    def encode(self, s: State) -> int:
        m = 0
        for l in s.literals:
            i = self.fact_id.get(l)
            if i is None:
                i = self._fid(l)
            m |= 1 << i
        return m

    def decode(self, mask: int, objects) -> State:
        return State(frozenset(self.facts[i] for i in self._bits(mask)), objects)

    def successors(self, mask: int):
        ops = self.ops
        for act in self.actions:
            for i in self.groups[act]:
                _, pos, neg, add, dele = ops[i]
                if mask & pos == pos and not mask & neg:
                    nxt = (mask & ~dele) | add
                    if nxt != mask:
                        yield act, i, nxt
                    break


_TASK_CACHE: "OrderedDict[tuple, _GroundTask]" = OrderedDict()


def _task_for(dm: DeterminizedModel, s: State) -> _GroundTask:
    changing = {l.predicate for r in dm.all_rules() for l in r.effects}
    static = frozenset(l for l in s.literals if l.predicate not in changing)
    key = (dm.fingerprint, s.objects, static)
    task = _TASK_CACHE.get(key)
    if task is None:
        task = _GroundTask(dm, s)
        _TASK_CACHE[key] = task
        if len(_TASK_CACHE) > 64:
            _TASK_CACHE.popitem(last=False)
    else:
        _TASK_CACHE.move_to_end(key)
    return task


# --- heuristic -------------------------------------------------------------

def _relaxed(task: _GroundTask, mask: int, goal_mask: int, lifted: Optional[Conjunction], objects):
    """FF relaxed plan length and the helpful ops; (None, ()) if relaxed-unreachable."""
    reached = mask
    achiever: Dict[int, int] = {}
    applied = set()
    n = len(task.ops)
    ground_goal = goal_mask
    layer = 0
    while True:
        if lifted is None:
            if reached & ground_goal == ground_goal:
                break
        else:
            st = task.decode(reached, objects)
            b = first_binding(lifted, st, distinct=True)
            if b is not None:
                ground_goal = 0
                for l in lifted.literals:
                    if not l.negated:
                        ground_goal |= 1 << task.fact_id[l.ground(b)]
                break
        new = reached
        for i in range(n):
            if i in applied:
                continue
            op = task.ops[i]
            if reached & op[1] == op[1]:
                applied.add(i)
                add = op[3] & ~new
                if add:
                    for f in task._bits(add):
                        achiever[f] = i
                    new |= add
        if new == reached:
            return None, ()
        reached = new
        layer += 1
    # extract relaxed plan
    plan_ops = set()
    todo = [f for f in task._bits(ground_goal & ~mask)]
    done = set()
    while todo:
        f = todo.pop()
        if f in done:
            continue
        done.add(f)
        i = achiever[f]
        if i not in plan_ops:
            plan_ops.add(i)
            for p in task.op_pos_list[i]:
                if not (mask >> p) & 1:
                    todo.append(p)
    helpful = {i for i in plan_ops if mask & task.ops[i][1] == task.ops[i][1]}
    return len(plan_ops), helpful


# --- search ----------------------------------------------------------------

@dataclass
class Plan:
    actions: List[Literal]
    goal: Conjunction
    model_fingerprint: str
    states: List[State] = field(default_factory=list)  # predicted states, len = len(actions) + 1
    goal_binding: Binding = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.actions)

    def __bool__(self) -> bool:
        # an empty plan (goal already holds) is still a success
        return True


@dataclass(frozen=True)
class Failure:
    reason: str  # "exhausted" (proven unreachable under the model) | "timeout"
    expansions: int = 0

    def __bool__(self) -> bool:
        return False


@dataclass
class PlannerStats:
    calls: int = 0
    plans: int = 0
    validated: int = 0
    failures: Dict[str, int] = field(default_factory=dict)


STATS = PlannerStats()


def goal_binding(goal: Conjunction, s: State) -> Optional[Binding]:
    return first_binding(goal, s, distinct=True)


def _goal_mask(task: _GroundTask, goal: Conjunction) -> Tuple[int, int]:
    pos = neg = 0
    for l in goal.literals:
        if l.negated:
            neg |= 1 << task._fid(l.positive)
        else:
            pos |= 1 << task._fid(l)
    return pos, neg


def plan(s: State, goal: Conjunction, dm: DeterminizedModel, timeout: float = DEFAULT_TIMEOUT,
         horizon: Optional[int] = None, max_expansions: int = DEFAULT_MAX_EXPANSIONS):
    """Greedy best-first search with lazy FF heuristic and helpful-action preference.

    Returns a Plan that has been validated by forward simulation, or a Failure.
    """
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    STATS.calls += 1
    start_time = time.monotonic()
    b0 = goal_binding(goal, s)
    if b0 is not None:
        return _finish(Plan([], goal, dm.fingerprint, [s], b0), s, dm)
    if horizon is not None and horizon <= 0:
        return _fail("exhausted", 0)
    task = _task_for(dm, s)
    lifted = goal if goal.variables else None
    gpos = gneg = 0
    if lifted is None:
        gpos, gneg = _goal_mask(task, goal)
    m0 = task.encode(s)
    objects = s.objects

    def is_goal(mask: int) -> bool:
        if lifted is None:
            return mask & gpos == gpos and not mask & gneg
        return goal_binding(lifted, task.decode(mask, objects)) is not None

    h0, _ = _relaxed(task, m0, gpos, lifted, objects)
    if h0 is None:
        # the delete relaxation already proves the goal unreachable under dm
        return _fail("exhausted", 0)
    counter = itertools.count()
    # entries: (h of parent, not-helpful flag, tiebreak, mask, depth, parent key)
    frontier = [(h0, 0, next(counter), m0, 0)]
    parent: Dict[int, Tuple[Optional[int], Optional[Literal]]] = {m0: (None, None)}
    expansions = 0
    while frontier:
        _, _, _, mask, depth = heapq.heappop(frontier)
        if is_goal(mask):
            return _finish(_reconstruct(parent, mask, goal, dm, s), s, dm)
        if horizon is not None and depth >= horizon:
            continue
        expansions += 1
        if expansions > max_expansions or time.monotonic() - start_time > timeout:
            return _fail("timeout", expansions)
        h, helpful = _relaxed(task, mask, gpos, lifted, objects)
        if h is None:
            continue
        for act, i, nxt in task.successors(mask):
            if nxt in parent:
                continue
            parent[nxt] = (mask, act)
            heapq.heappush(frontier, (h, 0 if i in helpful else 1, next(counter), nxt, depth + 1))
    return _fail("exhausted", expansions)


def _fail(reason: str, expansions: int) -> Failure:
    STATS.failures[reason] = STATS.failures.get(reason, 0) + 1
    return Failure(reason, expansions)


def _reconstruct(parent, mask, goal, dm, s) -> Plan:
    acts: List[Literal] = []
    while True:
        prev, act = parent[mask]
        if prev is None:
            break
        acts.append(act)
        mask = prev
    acts.reverse()
    return Plan(acts, goal, dm.fingerprint)


class UnsoundPlanError(AssertionError):
    pass


def _finish(p: Plan, s: State, dm: DeterminizedModel) -> Plan:
    """Validate by NDR-level simulation (independent of the bitmask encoding)."""
    states = simulate(dm, s, p.actions)
    b = goal_binding(p.goal, states[-1])
    STATS.plans += 1
    if b is None:
        raise UnsoundPlanError(f"plan {p.actions} does not reach {p.goal} in its model")
    STATS.validated += 1
    p.states = states
    p.goal_binding = b
    return p


# --- execution -------------------------------------------------------------

@dataclass
class TraceEvent:
    kind: str  # "act" | "replan" | "goal" | "failure" | "horizon"
    state: State
    action: Optional[Literal] = None
    detail: str = ""


@dataclass
class ExecutionTrace:
    events: List[TraceEvent]
    reached_goal: bool
    replans: int
    steps: int


def replan_policy(s0: State, goal: Conjunction, m: NDRSet, env_step: Callable[[Literal], State],
                  horizon: int, timeout: float = DEFAULT_TIMEOUT,
                  max_expansions: int = DEFAULT_MAX_EXPANSIONS) -> ExecutionTrace:
    """FF-Replan: follow the determinized plan, replanning when an observation deviates."""
    dm = determinize(m)
    events: List[TraceEvent] = []
    s = s0
    steps = 0
    replans = 0
    p = plan(s, goal, dm, timeout, horizon, max_expansions)
    if not p:
        events.append(TraceEvent("failure", s, detail=p.reason))
        return ExecutionTrace(events, False, 0, 0)
    idx = 0
    while True:
        if holds(goal, s, distinct=True):
            events.append(TraceEvent("goal", s))
            return ExecutionTrace(events, True, replans, steps)
        if steps >= horizon:
            events.append(TraceEvent("horizon", s))
            return ExecutionTrace(events, False, replans, steps)
        if idx >= len(p.actions):
            p = plan(s, goal, dm, timeout, horizon - steps, max_expansions)
            replans += 1
            events.append(TraceEvent("replan", s, detail="plan exhausted"))
            if not p:
                events.append(TraceEvent("failure", s, detail=p.reason))
                return ExecutionTrace(events, False, replans, steps)
            idx = 0
            continue
        a = p.actions[idx]
        s_next = env_step(a)
        steps += 1
        events.append(TraceEvent("act", s, a))
        expected = p.states[idx + 1]
        s = s_next
        idx += 1
        if s.literals != expected.literals and not holds(goal, s, distinct=True):
            if steps >= horizon:
                continue
            replans += 1
            events.append(TraceEvent("replan", s, detail="deviation"))
            p = plan(s, goal, dm, timeout, horizon - steps, max_expansions)
            if not p:
                events.append(TraceEvent("failure", s, detail=p.reason))
                return ExecutionTrace(events, False, replans, steps)
            idx = 0
