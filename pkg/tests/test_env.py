import numpy as np
import pytest

from glib_lab.env import EpisodeExhaustedError, Environment, load_domain
from glib_lab.logic import lit
from glib_lab.ndr import NOISE, ground_actions, predict_distribution
from oracles import reachable_pairs, three_block_pool


def test_default_horizons():
    assert Environment.from_bundle(load_domain("blocks")).horizon == 25
    assert Environment.from_bundle(load_domain("tireworld")).horizon == 8


def test_invalid_config():
    b = load_domain("blocks")
    with pytest.raises(ValueError):
        Environment(b.truth, [], 25)
    with pytest.raises(ValueError):
        Environment(b.truth, b.problems, 0)


def test_singleton_pool_always_same_init():
    b = load_domain("blocks")
    env = Environment(b.truth, b.problems[:1])
    rng = np.random.default_rng(0)
    assert all(env.reset(rng) == b.problems[0].init for _ in range(5))


def test_seeded_reset_is_reproducible():
    b = load_domain("blocks")
    env = Environment.from_bundle(b)

    def seq():
        rng = np.random.default_rng(3)
        return [env.reset(rng) for _ in range(8)]

    assert seq() == seq()


def test_blocks_pool_sizes():
    for p in load_domain("blocks").problems:
        assert 5 <= len(p.objects) <= 7


def test_step_counter_and_exhaustion():
    b = load_domain("blocks")
    env = Environment(b.truth, b.problems, 3)
    rng = np.random.default_rng(0)
    with pytest.raises(EpisodeExhaustedError):
        env.step(lit("put-down", "b0"), rng)
    s = env.reset(rng)
    for _ in range(3):
        env.step(env.actions()[0], rng)
    assert env.done and env.t == 3
    with pytest.raises(EpisodeExhaustedError):
        env.step(env.actions()[0], rng)
    assert env.reset(rng) is not None and env.t == 0 and s is not None


def test_inapplicable_action_is_identity():
    b = load_domain("blocks")
    env = Environment(b.truth, b.problems)
    s = env.reset(np.random.default_rng(0))
    held = [l for l in s.literals if l.predicate == "holding"]
    assert not held
    assert env.step(lit("put-down", "b0"), np.random.default_rng(0)) == s


def test_gripper_pick_holds_ball():
    b = load_domain("gripper")
    env = Environment(b.truth, b.problems)
    s = env.reset(np.random.default_rng(0))
    (room,) = [l.args[0] for l in s.literals if l.predicate == "at-robby"]
    ball = next(l.args[0] for l in sorted(s.literals) if l.predicate == "at" and l.args[1] == room)
    s2 = env.step(lit("pick", ball, room, "left"), np.random.default_rng(0))
    assert lit("carry", ball, "left") in s2.literals and lit("free", "left") not in s2.literals


def test_exploding_blocks_eventually_destroys():
    b = load_domain("exploding_blocks")
    env = Environment.from_bundle(b)
    rng = np.random.default_rng(0)
    destroyed = False
    for _ in range(200):
        s = env.reset(rng)
        while not env.done:
            acts = env.actions()
            s = env.step(acts[int(rng.integers(len(acts)))], rng)
            full = {l.args for l in s.literals if l.predicate == "no-destroyed"}
            if len(full) < len(s.objects) or lit("no-destroyed-table") not in s.literals:
                destroyed = True
        if destroyed:
            break
    assert destroyed


def test_eval_transitions():
    b = load_domain("tireworld")
    env = Environment.from_bundle(b)
    with pytest.raises(ValueError):
        env.sample_eval_transitions(0, np.random.default_rng(0))
    e1 = env.sample_eval_transitions(50, np.random.default_rng(9))
    e2 = env.sample_eval_transitions(50, np.random.default_rng(9))
    assert e1 == e2
    # every sampled state is reachable from some pool initial state
    reach = set()
    for p in b.problems:
        reach |= {s for s, _ in reachable_pairs(b.truth, p.init)}
    for t in e1:
        assert t.s.literals in reach
        assert t.s.objects == t.s_next.objects
        outs = [x for _, x in predict_distribution(b.truth, t.s, t.a) if x is not NOISE]
        assert t.s_next in outs


def test_eval_sampling_does_not_touch_episode():
    b = load_domain("blocks")
    env = Environment.from_bundle(b)
    rng = np.random.default_rng(1)
    s = env.reset(rng)
    env.step(ground_actions(b.truth.action_predicates, s)[0], rng)
    before = (env.state, env.t, env.problem)
    env.sample_eval_transitions(10, np.random.default_rng(2))
    assert (env.state, env.t, env.problem) == before


def test_random_policy_recurrence_three_blocks():
    """A random policy visits every reachable (s, a) of the 3-block instance within 50k steps."""
    b = load_domain("blocks")
    pool = three_block_pool(b.domain)
    pairs = set()
    for p in pool:
        pairs |= reachable_pairs(b.truth, p.init)
    assert len(pairs) == 22 * 24
    env = Environment(b.truth, pool, 25)
    acts = ground_actions(b.truth.action_predicates, pool[0].init)
    rng = np.random.default_rng(0)
    seen = set()
    steps = 0
    while steps < 50000 and len(seen) < len(pairs):
        s = env.reset(rng)
        while not env.done:
            a = acts[int(rng.integers(len(acts)))]
            seen.add((s.literals, a))
            s = env.step(a, rng)
            steps += 1
    assert seen == pairs
