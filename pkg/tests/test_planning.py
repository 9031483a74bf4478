from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glib_lab.env import load_domain
from glib_lab.logic import Conjunction, Var, holds, lit, make_state
from glib_lab.ndr import NDR, NOISE, NDRSet, ground_actions, sample_next
from glib_lab.planning import Failure, Plan, det_step, determinize, plan, replan_policy, simulate
from oracles import three_block_states

BLOCKS = load_domain("blocks")
T = BLOCKS.truth
DT = determinize(T)
STATES = three_block_states()


def _poke(outcomes):
    x = Var("?x")
    return NDR(lit("poke", "?x"), Conjunction((), (x,)), tuple(outcomes))


def _poke_model(*rules):
    from glib_lab.logic import Predicate
    preds = (Predicate("blue", 1), Predicate("green", 1), Predicate("red", 1))
    return NDRSet.empty(preds, (Predicate("poke", 1),)).with_rules("poke", tuple(rules))


def _goal(*texts):
    from glib_lab.logic import parse_literal
    return Conjunction(tuple(parse_literal(t) for t in texts))


def _bfs_reachable(s0):
    """Ground states reachable under the determinized truth, by exhaustive search."""
    seen = {s0.literals: s0}
    q = deque([s0])
    while q:
        s = q.popleft()
        for a in ground_actions(T.action_predicates, s):
            n = det_step(DT, s, a)
            if n.literals not in seen:
                seen[n.literals] = n
                q.append(n)
    return seen


# --- determinize -----------------------------------------------------------------

def test_determinize_deterministic_rule_is_itself():
    (rule,) = DT.rules["pick-up"]
    (src,) = T.rules["pick-up"]
    assert rule.preconditions == src.preconditions and rule.effects == src.outcomes[0][1]


def test_determinize_drops_noise():
    red = (lit("red", "?x"),)
    assert determinize(_poke_model(_poke([(0.8, red), (0.2, NOISE)]))).rules["poke"][0].effects == red
    # noise is excluded from the argmax even when it dominates
    assert determinize(_poke_model(_poke([(0.6, NOISE), (0.4, red)]))).rules["poke"][0].effects == red
    assert determinize(_poke_model(_poke([(1.0, NOISE)]))).rules["poke"] == ()


def test_determinize_tie_prefers_larger_effect_set():
    small = (lit("red", "?x"),)
    big = (lit("blue", "?x"), lit("green", "?x"))
    (r,) = determinize(_poke_model(_poke([(0.5, small), (0.5, big)]))).rules["poke"]
    assert r.effects == big


def test_determinize_drops_default_rules():
    m = NDRSet.empty(T.predicates, T.action_predicates)
    assert all(rs == () for rs in determinize(m).rules.values())


# --- plan -------------------------------------------------------------------------

def test_goal_already_true_gives_empty_plan():
    s = STATES[0]
    p = plan(s, Conjunction(tuple(sorted(s.literals))), DT)
    assert isinstance(p, Plan) and p.actions == [] and p.states == [s]


def test_timeout_must_be_positive():
    with pytest.raises(ValueError):
        plan(STATES[0], _goal("(holding a)"), DT, timeout=0)


def test_three_block_stack_plan_validates():
    s = make_state(["(ontable a)", "(ontable b)", "(ontable c)", "(clear a)", "(clear b)", "(clear c)",
                    "(handempty)"], ["a", "b", "c"])
    goal = _goal("(on a b)", "(on b c)")
    p = plan(s, goal, DT)
    assert p
    end = simulate(DT, s, p.actions)[-1]
    assert holds(goal, end)
    # the real (deterministic) environment agrees with the determinized prediction
    rng = np.random.default_rng(0)
    x = s
    for a in p.actions:
        x = sample_next(T, x, a, rng)
    assert x == end


def test_unreachable_goal_exhausts():
    rooms = load_domain("rooms")
    s0 = rooms.problems[0].init
    res = plan(s0, _goal("(at r3)"), determinize(rooms.truth))
    assert isinstance(res, Failure) and not res
    assert res.reason == "exhausted"


def test_horizon_bound_fails_long_plans():
    s = make_state(["(ontable a)", "(ontable b)", "(ontable c)", "(clear a)", "(clear b)", "(clear c)",
                    "(handempty)"], ["a", "b", "c"])
    assert not plan(s, _goal("(on a b)", "(on b c)"), DT, horizon=3)
    assert plan(s, _goal("(on a b)", "(on b c)"), DT, horizon=4)


def test_heuristic_solvability_matches_brute_force():
    """Every full-state goal on the 3-block enumeration is solved iff it is BFS-reachable."""
    for s in STATES:
        reach = _bfs_reachable(s)
        for g in STATES:
            res = plan(s, Conjunction(tuple(sorted(g.literals))), DT)
            assert bool(res) == (g.literals in reach), (s, g)
            if res:
                assert simulate(DT, s, res.actions)[-1].literals == g.literals


def test_lifted_goal_plan():
    s = STATES[0]
    goal = Conjunction((lit("holding", "?x"),), (Var("?x"),))
    p = plan(s, goal, DT)
    assert p and p.goal_binding["?x"] in {o.name for o in s.objects}
    assert lit("holding", p.goal_binding["?x"]) in p.states[-1].literals


def test_planner_is_deterministic():
    s, g = STATES[3], STATES[17]
    goal = Conjunction(tuple(sorted(g.literals)))
    assert plan(s, goal, DT).actions == plan(s, goal, DT).actions


@settings(max_examples=40, deadline=None)
@given(st.integers(0, len(STATES) - 1), st.integers(0, len(STATES) - 1), st.integers(0, 2**16))
def test_returned_plans_reach_their_goal(i, j, seed):
    rng = np.random.default_rng(seed)
    lits = sorted(STATES[j].literals)
    pick = rng.choice(len(lits), size=min(len(lits), 1 + seed % 3), replace=False)
    goal = Conjunction(tuple(lits[k] for k in sorted(pick)))
    res = plan(STATES[i], goal, DT)
    if res:
        assert holds(goal, simulate(DT, STATES[i], res.actions)[-1], distinct=True)


# --- replanning --------------------------------------------------------------------

def _env_step(truth, s0, rng):
    state = [s0]

    def step(a):
        state[0] = sample_next(truth, state[0], a, rng)
        return state[0]
    return step


def test_replan_correct_model_no_replans():
    s = make_state(["(ontable a)", "(ontable b)", "(ontable c)", "(clear a)", "(clear b)", "(clear c)",
                    "(handempty)"], ["a", "b", "c"])
    goal = _goal("(on a b)", "(on b c)")
    tr = replan_policy(s, goal, T, _env_step(T, s, np.random.default_rng(0)), horizon=25)
    assert tr.reached_goal and tr.replans == 0
    assert [e.kind for e in tr.events][-1] == "goal"


def test_tireworld_deviation_triggers_replan():
    tire = load_domain("tireworld")
    replans = 0
    for p in tire.suite:
        for seed in range(5):
            tr = replan_policy(p.init, p.goal, tire.truth,
                               _env_step(tire.truth, p.init, np.random.default_rng(seed)), horizon=8)
            replans += sum(e.kind == "replan" for e in tr.events)
            assert tr.replans == sum(e.kind == "replan" for e in tr.events)
    assert replans >= 1


def test_wrong_model_is_logged():
    # a model that believes pick-up always works, executed in the true world
    s = make_state(["(on a b)", "(ontable b)", "(clear a)", "(handempty)"], ["a", "b"])
    x = Var("?x")
    wrong = NDR(lit("pick-up", "?x"), Conjunction((), (x,)), ((1.0, (lit("holding", "?x"),)),))
    m = T.with_rules("pick-up", (wrong,))
    tr = replan_policy(s, _goal("(holding b)"), m, _env_step(T, s, np.random.default_rng(0)), horizon=5)
    kinds = [e.kind for e in tr.events]
    assert kinds[0] == "act" and kinds[1] in ("replan", "act", "goal")
    assert kinds[-1] in ("goal", "failure", "horizon")


def test_replan_initial_failure_trace():
    rooms = load_domain("rooms")
    s0 = rooms.problems[0].init
    tr = replan_policy(s0, _goal("(at r3)"), rooms.truth, lambda a: s0, horizon=5)
    assert not tr.reached_goal and tr.events[-1].kind == "failure" and tr.steps == 0
