"""Reader/writer for the PDDL/PPDDL subset used by the bundled domains.

Two operator styles are accepted. Plain PDDL: the operator name and its
parameters form the action literal. PDDLGym style: the domain carries a
``; (:actions name ...)`` comment declaring action predicates, and every
operator includes one such action literal in its precondition, which lets
several operators share one action predicate.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .logic import (DEFAULT_TYPE, Conjunction, Literal, Obj, Predicate, State, Var, WILDCARD,
                    is_var, lit)

PROB_TOL = 1e-9

Effect = Tuple[Literal, ...]


class PDDLError(Exception):
    pass


class PDDLSyntaxError(PDDLError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col


class UnsupportedFeatureError(PDDLError):
    def __init__(self, construct: str):
        super().__init__(f"unsupported PDDL construct: {construct}")
        self.construct = construct


class PDDLSemanticError(PDDLError):
    pass


@dataclass(frozen=True)
class Operator:
    name: str
    parameters: Tuple[Var, ...]
    action: Literal
    preconditions: Conjunction
    outcomes: Tuple[Tuple[float, Effect], ...]
    noise_outcome: Optional[int] = None  # index into outcomes, learned models only
    is_default: bool = False


@dataclass
class DomainSpec:
    name: str
    types: Tuple[str, ...]
    predicates: Dict[str, Predicate]
    action_predicates: Dict[str, Predicate]
    operators: List[Operator]
    requirements: Tuple[str, ...] = ()

    @property
    def state_predicates(self) -> List[Predicate]:
        return list(self.predicates.values())


@dataclass
class ProblemSpec:
    name: str
    domain_name: str
    objects: frozenset  # of Obj
    init: State
    goal: Conjunction


# --- s-expressions ----------------------------------------------------------

class _Tok(str):
    line: int
    col: int


def _tokenize(text: str) -> List[_Tok]:
    toks: List[_Tok] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        i = 0
        n = len(line)
        while i < n:
            ch = line[i]
            if ch == ";":
                break
            if ch.isspace():
                i += 1
                continue
            if ch in "()":
                t = _Tok(ch)
                t.line, t.col = lineno, i + 1
                toks.append(t)
                i += 1
                continue
            j = i
            while j < n and not line[j].isspace() and line[j] not in "();":
                j += 1
            t = _Tok(line[i:j])
            t.line, t.col = lineno, i + 1
            toks.append(t)
            i = j
    return toks


SExpr = Union[_Tok, list]


def parse_sexpr(text: str) -> list:
    toks = _tokenize(text)
    if not toks:
        raise PDDLSyntaxError("empty input", 1, 1)
    stack: List[list] = []
    root: Optional[list] = None
    for t in toks:
        if root is not None and not stack:
            raise PDDLSyntaxError("trailing content after top-level expression", t.line, t.col)
        if t == "(":
            new: list = []
            if stack:
                stack[-1].append(new)
            else:
                root = new
            stack.append(new)
        elif t == ")":
            if not stack:
                raise PDDLSyntaxError("unexpected ')'", t.line, t.col)
            stack.pop()
        else:
            if not stack:
                raise PDDLSyntaxError(f"unexpected token {t!r} outside expression", t.line, t.col)
            stack[-1].append(t)
    if stack:
        last_tok = toks[-1]
        raise PDDLSyntaxError("unbalanced '(' (missing ')')", last_tok.line, last_tok.col)
    assert root is not None
    return root


def _kw(x: SExpr) -> str:
    return x.lower() if isinstance(x, str) else ""


def _pos(x: SExpr) -> Tuple[int, int]:
    while isinstance(x, list):
        if not x:
            return (0, 0)
        x = x[0]
    return (getattr(x, "line", 0), getattr(x, "col", 0))


def _typed_list(items: Sequence[SExpr]) -> List[Tuple[str, str]]:
    """``a b - t c`` -> [(a, t), (b, t), (c, object)]."""
    out: List[Tuple[str, str]] = []
    pending: List[str] = []
    i = 0
    while i < len(items):
        x = items[i]
        if isinstance(x, list):
            line, col = _pos(x)
            raise PDDLSyntaxError("unexpected list in typed list", line, col)
        if x == "-":
            if i + 1 >= len(items) or isinstance(items[i + 1], list):
                raise UnsupportedFeatureError("either-types")
            t = str(items[i + 1])
            out.extend((p, t) for p in pending)
            pending = []
            i += 2
            continue
        pending.append(str(x))
        i += 1
    out.extend((p, DEFAULT_TYPE) for p in pending)
    return out


_SUPPORTED_REQS = {":strips", ":typing", ":equality", ":probabilistic-effects", ":negative-preconditions"}
_ACTIONS_COMMENT = re.compile(r";\s*\(:actions\s+([^)]*)\)", re.IGNORECASE)
_NDR_COMMENT = re.compile(r";\s*@ndr\s+(\S+)\s+(.*)$", re.IGNORECASE | re.MULTILINE)


def _literal(x: SExpr, where: str) -> Literal:
    if not isinstance(x, list) or not x:
        line, col = _pos(x)
        raise PDDLSyntaxError(f"expected literal in {where}", line, col)
    if _kw(x[0]) == "not":
        if len(x) != 2:
            line, col = _pos(x)
            raise PDDLSyntaxError("malformed (not ...)", line, col)
        inner = _literal(x[1], where)
        return inner.negate()
    head = _kw(x[0])
    if head in ("forall", "exists", "or", "imply", "when", "increase", "decrease"):
        raise UnsupportedFeatureError(head)
    if any(isinstance(a, list) for a in x[1:]):
        raise UnsupportedFeatureError("function terms")
    return lit(str(x[0]), *[str(a) for a in x[1:]])


def _conjunction_literals(x: SExpr, where: str) -> List[Literal]:
    if isinstance(x, list) and not x:
        return []
    if isinstance(x, list) and _kw(x[0]) == "and":
        out: List[Literal] = []
        for y in x[1:]:
            out.extend(_conjunction_literals(y, where))
        return out
    return [_literal(x, where)]


def _parse_effect(x: SExpr) -> Tuple[Tuple[float, Effect], ...]:
    """Flatten an effect to a categorical over literal sets."""
    det: List[Literal] = []
    prob_blocks: List[List[Tuple[float, List[Literal]]]] = []

    def walk(e: SExpr) -> None:
        if isinstance(e, list) and not e:
            return
        if isinstance(e, list) and _kw(e[0]) == "and":
            for y in e[1:]:
                walk(y)
            return
        if isinstance(e, list) and _kw(e[0]) == "probabilistic":
            body = e[1:]
            if len(body) % 2:
                line, col = _pos(e)
                raise PDDLSyntaxError("probabilistic needs probability/effect pairs", line, col)
            branches: List[Tuple[float, List[Literal]]] = []
            for p, eff in zip(body[::2], body[1::2]):
                try:
                    prob = float(p) if "/" not in str(p) else _frac(str(p))
                except (TypeError, ValueError):
                    line, col = _pos(p)
                    raise PDDLSyntaxError(f"bad probability {p!r}", line, col)
                sub = _parse_effect(eff)
                if len(sub) != 1:
                    raise UnsupportedFeatureError("nested probabilistic effects")
                branches.append((prob, list(sub[0][1])))
            total = sum(p for p, _ in branches)
            if any(p <= 0 or p > 1 for p, _ in branches) or total > 1 + PROB_TOL:
                line, col = _pos(e)
                raise PDDLSyntaxError("probabilities must lie in (0,1] and sum to at most 1", line, col)
            if total < 1 - PROB_TOL:
                branches.append((1.0 - total, []))
            prob_blocks.append(branches)
            return
        if isinstance(e, list) and _kw(e[0]) in ("when", "forall"):
            raise UnsupportedFeatureError(_kw(e[0]))
        det.append(_literal(e, "effect"))

    walk(x)
    outcomes: List[Tuple[float, List[Literal]]] = [(1.0, list(det))]
    for block in prob_blocks:
        outcomes = [(p * q, eff + beff) for p, eff in outcomes for q, beff in block]
    return tuple((p, tuple(dict.fromkeys(eff))) for p, eff in outcomes)


def _frac(s: str) -> float:
    a, b = s.split("/")
    return float(a) / float(b)


def parse_domain(text: str) -> DomainSpec:
    tree = parse_sexpr(text)
    if not tree or _kw(tree[0]) != "define":
        line, col = _pos(tree)
        raise PDDLSyntaxError("expected (define ...)", line, col)
    if len(tree) < 2 or not isinstance(tree[1], list) or _kw(tree[1][0]) != "domain":
        line, col = _pos(tree)
        raise PDDLSyntaxError("expected (domain <name>)", line, col)
    name = str(tree[1][1])
    types: List[str] = []
    requirements: Tuple[str, ...] = ()
    predicates: Dict[str, Predicate] = {}
    raw_ops: List[list] = []
    for section in tree[2:]:
        if not isinstance(section, list) or not section:
            line, col = _pos(section)
            raise PDDLSyntaxError("expected section", line, col)
        head = _kw(section[0])
        if head == ":requirements":
            requirements = tuple(_kw(r) for r in section[1:])
            for r in requirements:
                if r not in _SUPPORTED_REQS:
                    raise UnsupportedFeatureError(r)
        elif head == ":types":
            for t, parent in _typed_list(section[1:]):
                if parent != DEFAULT_TYPE:
                    raise UnsupportedFeatureError("type hierarchies")
                types.append(t)
        elif head == ":predicates":
            for p in section[1:]:
                if not isinstance(p, list) or not p:
                    line, col = _pos(p)
                    raise PDDLSyntaxError("malformed predicate declaration", line, col)
                args = _typed_list(p[1:])
                pname = str(p[0])
                predicates[pname] = Predicate(pname, len(args), tuple(t for _, t in args))
        elif head == ":constants":
            raise UnsupportedFeatureError(":constants")
        elif head == ":action":
            raw_ops.append(section)
        elif head in (":functions", ":durative-action", ":derived"):
            raise UnsupportedFeatureError(head)
        else:
            line, col = _pos(section)
            raise PDDLSyntaxError(f"unknown domain section {section[0]!r}", line, col)

    flags = {m.group(1): m.group(2).strip() for m in _NDR_COMMENT.finditer(text)}
    declared = _ACTIONS_COMMENT.search(text)
    action_predicates: Dict[str, Predicate] = {}
    if declared:
        for a in declared.group(1).split():
            if a not in predicates:
                raise PDDLSemanticError(f"action predicate {a} not declared in :predicates")
            p = predicates.pop(a)
            action_predicates[a] = Predicate(p.name, p.arity, p.argument_types, "action")

    operators = [_parse_operator(op, predicates, action_predicates, bool(declared), flags)
                 for op in raw_ops]
    if not declared:
        for o in operators:
            action_predicates[o.action.predicate] = Predicate(
                o.action.predicate, len(o.parameters), tuple(v.type for v in o.parameters), "action")
    return DomainSpec(name, tuple(types), predicates, action_predicates, operators, requirements)


def _parse_operator(op: list, predicates: Dict[str, Predicate], action_preds: Dict[str, Predicate],
                    gym_style: bool, flags: Dict[str, str]) -> Operator:
    if len(op) < 2:
        line, col = _pos(op)
        raise PDDLSyntaxError("operator without name", line, col)
    name = str(op[1])
    params: List[Var] = []
    pre: List[Literal] = []
    outcomes: Tuple[Tuple[float, Effect], ...] = ((1.0, ()),)
    i = 2
    while i < len(op):
        key = _kw(op[i])
        if i + 1 >= len(op):
            line, col = _pos(op[i])
            raise PDDLSyntaxError(f"missing value for {op[i]}", line, col)
        val = op[i + 1]
        if key == ":parameters":
            params = [Var(n, t) for n, t in _typed_list(val)]
        elif key == ":precondition":
            pre = _conjunction_literals(val, "precondition")
        elif key == ":effect":
            outcomes = _parse_effect(val)
        else:
            line, col = _pos(op[i])
            raise PDDLSyntaxError(f"unknown operator field {op[i]!r}", line, col)
        i += 2
    pnames = {v.name for v in params}
    if gym_style:
        acts = [l for l in pre if l.predicate in action_preds]
        if len(acts) != 1 or acts[0].negated:
            raise PDDLSemanticError(f"operator {name} must mention exactly one action literal")
        action = acts[0]
        pre = [l for l in pre if l.predicate not in action_preds]
    else:
        action = lit(name, *[v.name for v in params])
    for l in pre + [e for _, eff in outcomes for e in eff]:
        if l.predicate == "=":
            continue
        p = predicates.get(l.predicate)
        if p is None:
            raise PDDLSemanticError(f"undeclared predicate {l.predicate} in operator {name}")
        if p.arity != len(l.args):
            raise PDDLSemanticError(f"arity mismatch for {l.predicate} in operator {name}")
        for a in l.args:
            if a != WILDCARD and (not is_var(a) or a not in pnames):
                raise PDDLSemanticError(f"unknown term {a} in operator {name}")
    flag = flags.get(name, "")
    noise = None
    m = re.search(r"noise=(\d+)", flag)
    if m:
        noise = int(m.group(1))
    total = sum(p for p, _ in outcomes)
    if abs(total - 1.0) > PROB_TOL:
        raise PDDLSemanticError(f"outcome probabilities of {name} sum to {total}")
    return Operator(name, tuple(params), action, Conjunction(tuple(dict.fromkeys(pre)), tuple(params)),
                    outcomes, noise, "default" in flag.split())


def parse_problem(text: str, domain: DomainSpec) -> ProblemSpec:
    tree = parse_sexpr(text)
    if not tree or _kw(tree[0]) != "define" or len(tree) < 2 or _kw(tree[1][0]) != "problem":
        line, col = _pos(tree)
        raise PDDLSyntaxError("expected (define (problem <name>) ...)", line, col)
    name = str(tree[1][1])
    dname = domain.name
    objects: Dict[str, str] = {}
    init: List[Literal] = []
    goal: List[Literal] = []
    for section in tree[2:]:
        head = _kw(section[0]) if isinstance(section, list) and section else ""
        if head == ":domain":
            dname = str(section[1])
        elif head == ":objects":
            for n, t in _typed_list(section[1:]):
                if t != DEFAULT_TYPE and t not in domain.types:
                    raise PDDLSemanticError(f"undeclared type {t}")
                objects[n] = t
        elif head == ":init":
            for x in section[1:]:
                l = _literal(x, "init")
                if l.negated:
                    raise PDDLSemanticError("negative literal in :init")
                init.append(l)
        elif head == ":goal":
            goal = _conjunction_literals(section[1], "goal")
        elif head in (":metric", ":goal-reward", ":horizon"):
            continue
        else:
            line, col = _pos(section)
            raise PDDLSyntaxError(f"unknown problem section {section[0] if section else ''!r}", line, col)
    for l in init + goal:
        p = domain.predicates.get(l.predicate)
        if p is None:
            raise PDDLSemanticError(f"undeclared predicate {l.predicate}")
        if p.arity != len(l.args):
            raise PDDLSemanticError(f"arity mismatch for {l}")
        for i, a in enumerate(l.args):
            if a not in objects:
                raise PDDLSemanticError(f"undeclared object {a} in {l}")
            want = p.arg_type(i)
            if want != DEFAULT_TYPE and objects[a] != want:
                raise PDDLSemanticError(f"type mismatch for {a} in {l}")
    objs = frozenset(Obj(n, t) for n, t in objects.items())
    return ProblemSpec(name, dname, objs, State(frozenset(init), objs), Conjunction(tuple(dict.fromkeys(goal))))


# --- writing ----------------------------------------------------------------

def _fmt_prob(p: float) -> str:
    return repr(float(p))


def _fmt_effect(eff: Effect) -> str:
    return "(and " + " ".join(str(l) for l in eff) + ")" if eff else "(and)"


def write_domain(name: str, predicates: Sequence[Predicate], action_predicates: Sequence[Predicate],
                 operators: Sequence[Operator], types: Sequence[str] = ()) -> str:
    """Render operators in PDDLGym style (action literal inside the precondition)."""
    def decl(p: Predicate) -> str:
        args = " ".join(f"?v{i} - {t}" if t != DEFAULT_TYPE else f"?v{i}"
                        for i, t in enumerate(p.argument_types or (DEFAULT_TYPE,) * p.arity))
        return f"({p.name}{(' ' + args) if args else ''})"

    lines = [f"(define (domain {name})",
             "  (:requirements :strips" + (" :typing" if types else "") + " :negative-preconditions :probabilistic-effects)"]
    if types:
        lines.append("  (:types " + " ".join(types) + ")")
    lines.append("  (:predicates")
    for p in list(predicates) + list(action_predicates):
        lines.append("    " + decl(p))
    lines.append("  )")
    lines.append("  ; (:actions " + " ".join(p.name for p in action_predicates) + ")")
    for op in operators:
        flag = []
        if op.is_default:
            flag.append("default")
        if op.noise_outcome is not None:
            flag.append(f"noise={op.noise_outcome}")
        lines.append("")
        if flag:
            lines.append(f"  ; @ndr {op.name} {' '.join(flag)}")
        params = " ".join(v.name if v.type == DEFAULT_TYPE else f"{v.name} - {v.type}" for v in op.parameters)
        lines.append(f"  (:action {op.name}")
        lines.append(f"    :parameters ({params})")
        pre = [op.action] + list(op.preconditions.literals)
        lines.append("    :precondition (and " + " ".join(str(l) for l in pre) + ")")
        if len(op.outcomes) == 1 and abs(op.outcomes[0][0] - 1.0) <= PROB_TOL:
            lines.append("    :effect " + _fmt_effect(op.outcomes[0][1]))
        else:
            body = " ".join(f"{_fmt_prob(p)} {_fmt_effect(eff)}" for p, eff in op.outcomes)
            lines.append(f"    :effect (probabilistic {body})")
        lines.append("  )")
    lines.append(")")
    return "\n".join(lines) + "\n"


def write_problem(name: str, domain_name: str, state: State, goal: Conjunction) -> str:
    objs = " ".join(f"{o.name} - {o.type}" if o.type != DEFAULT_TYPE else o.name for o in sorted(state.objects))
    init = "\n    ".join(str(l) for l in state.sorted_literals())
    goal_txt = " ".join(str(l) for l in goal.literals)
    return (f"(define (problem {name}) (:domain {domain_name})\n"
            f"  (:objects {objs})\n  (:init\n    {init}\n  )\n  (:goal (and {goal_txt}))\n)\n")


def write_ndrs(m, domain_name: str = "learned") -> str:
    """Serialize an NDR set as PPDDL.

    A noise outcome becomes an empty effect with its probability, flagged by a
    ``; @ndr <op> noise=<i>`` comment; default rules are flagged ``default``.
    """
    from .ndr import NOISE

    ops: List[Operator] = []
    for ap in m.action_predicates:
        rules = list(m.rules.get(ap.name, ())) + [m.defaults[ap.name]]
        for i, r in enumerate(rules):
            name = f"{ap.name}-default" if r.is_default else f"{ap.name}-rule{i}"
            noise = next((j for j, (_, e) in enumerate(r.outcomes) if e is NOISE), None)
            outs = tuple((p, () if e is NOISE else e) for p, e in r.outcomes)
            ops.append(Operator(name, r.preconditions.variables, r.action, r.preconditions, outs,
                                noise, r.is_default))
    types = sorted({t for p in list(m.predicates) + list(m.action_predicates) for t in p.argument_types}
                   - {DEFAULT_TYPE})
    return write_domain(domain_name, m.predicates, m.action_predicates, ops, types)


def read_ndrs(text: str):
    """Inverse of :func:`write_ndrs` (noise outcomes restored, defaults regenerated)."""
    from .ndr import NDR, NOISE, NDRSet

    d = parse_domain(text)
    rules: Dict[str, List] = {name: [] for name in d.action_predicates}
    for op in d.operators:
        if op.is_default:
            continue
        outs = tuple((p, NOISE if i == op.noise_outcome else eff) for i, (p, eff) in enumerate(op.outcomes))
        rules[op.action.predicate].append(NDR(op.action, op.preconditions, outs))
    return NDRSet(tuple(sorted(d.predicates.values(), key=lambda p: p.name)),
                  tuple(sorted(d.action_predicates.values(), key=lambda p: p.name)),
                  {k: tuple(v) for k, v in rules.items()})
