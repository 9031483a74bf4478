"""Brute-force reference implementations used by the tests."""
import itertools
from collections import deque
from typing import List, Set, Tuple

from glib_lab.logic import Literal, State, make_state
from glib_lab.ndr import NOISE, NDRSet, ground_actions, predict_distribution


def three_block_states(names=("a", "b", "c")) -> List[State]:
    """Every legal Blocks configuration over `names`, hand empty or holding one block."""
    names = list(names)
    out = []
    for held in [None] + names:
        rest = [n for n in names if n != held]
        for sup in itertools.product([None] + rest, repeat=len(rest)):
            on = dict(zip(rest, sup))
            below = [v for v in on.values() if v is not None]
            if any(k == v for k, v in on.items()) or len(below) != len(set(below)):
                continue
            if any(_cyclic(on, k) for k in rest):
                continue
            lits = [f"(on {k} {v})" if v else f"(ontable {k})" for k, v in on.items()]
            lits += [f"(clear {k})" for k in rest if k not in below]
            lits.append(f"(holding {held})" if held else "(handempty)")
            out.append(make_state(lits, names))
    return out


def _cyclic(on, k) -> bool:
    seen = set()
    while k is not None:
        if k in seen:
            return True
        seen.add(k)
        k = on[k]
    return False


def reachable_pairs(truth: NDRSet, s0: State) -> Set[Tuple[frozenset, Literal]]:
    """BFS over every positive-probability outcome of the true model: all reachable (s, a)."""
    seen = {s0.literals: s0}
    queue = deque([s0])
    pairs = set()
    while queue:
        s = queue.popleft()
        for a in ground_actions(truth.action_predicates, s):
            pairs.add((s.literals, a))
            for p, nxt in predict_distribution(truth, s, a):
                if p > 0 and nxt is not NOISE and nxt.literals not in seen:
                    seen[nxt.literals] = nxt
                    queue.append(nxt)
    return pairs


def three_block_pool(domain):
    """The 3-block instance: initial states uniform over all hand-empty configurations."""
    from glib_lab.logic import Conjunction
    from glib_lab.pddl import ProblemSpec

    inits = [s for s in three_block_states() if any(l.predicate == "handempty" for l in s.literals)]
    return [ProblemSpec(f"three{i:02d}", domain.name, s.objects, s, Conjunction(())) for i, s in enumerate(inits)]
