import pytest

from glib_lab.env import load_domain
from glib_lab.logic import Conjunction, Var, lit
from glib_lab.ndr import NDR, NOISE, ModelInvalidError, NDRSet, compile_ground_truth, ground_actions, most_likely_next
from glib_lab.pddl import (PDDLSemanticError, PDDLSyntaxError, UnsupportedFeatureError, parse_domain,
                           parse_problem, read_ndrs, write_ndrs, write_problem)
from oracles import three_block_states

BUNDLED = ["blocks", "exploding_blocks", "gripper", "tireworld", "rooms", "switches"]

TIRE_MOVE = """
(define (domain t)
  (:requirements :strips :probabilistic-effects)
  (:predicates (at ?x) (road ?x ?y) (flattire))
  (:action move
    :parameters (?from ?to)
    :precondition (and (at ?from) (road ?from ?to))
    :effect (and (at ?to) (not (at ?from)) (probabilistic 0.5 (and (flattire))))))
"""


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_assets_parse(name):
    b = load_domain(name)
    assert b.problems
    for op in b.domain.operators:
        assert abs(sum(p for p, _ in op.outcomes) - 1.0) <= 1e-9
        assert all(0 < p <= 1 for p, _ in op.outcomes)
    for p in b.problems + b.suite:
        assert p.init.objects <= p.objects
        for l in p.goal.literals:
            assert l.predicate in b.domain.predicates


def test_blocks_has_four_actions():
    d = load_domain("blocks").domain
    assert sorted(d.action_predicates) == ["pick-up", "put-down", "stack", "unstack"]


def test_probabilistic_remainder_is_empty_outcome():
    d = parse_domain(TIRE_MOVE)
    (op,) = d.operators
    probs = sorted(op.outcomes, key=lambda o: len(o[1]))
    assert [p for p, _ in probs] == [0.5, 0.5]
    assert set(probs[0][1]) == {lit("at", "?to"), lit("at", "?from", negated=True)}
    assert lit("flattire") in probs[1][1]


def test_syntax_error_reports_position():
    with pytest.raises(PDDLSyntaxError) as e:
        parse_domain("(define (domain x)\n  (:predicates (p ?x)\n")
    assert e.value.line >= 1 and e.value.col >= 1


def test_unsupported_feature_is_named():
    text = """(define (domain x) (:predicates (p ?x))
      (:action a :parameters (?x) :precondition (p ?x) :effect (when (p ?x) (not (p ?x)))))"""
    with pytest.raises(UnsupportedFeatureError) as e:
        parse_domain(text)
    assert "when" in str(e.value)


def test_problem_examples():
    d = load_domain("blocks").domain
    p = parse_problem("""(define (problem q) (:domain blocks) (:objects a b c d e) (:init)
                         (:goal (and (on a b) (on b c) (on c d))))""", d)
    assert len(p.objects) == 5
    assert p.init.literals == frozenset()
    assert len(p.goal) == 3


def test_five_block_literal_count():
    # IPC encoding: one clear per tower top, one on/ontable per block, handempty
    b = load_domain("blocks")
    for p in b.problems:
        if len(p.objects) != 5:
            continue
        towers = sum(1 for l in p.init.literals if l.predicate == "ontable")
        assert len(p.init.literals) == 5 + towers + 1


def test_problem_errors():
    d = load_domain("blocks").domain
    with pytest.raises(PDDLSemanticError):
        parse_problem("(define (problem q) (:domain blocks) (:objects a) (:init (above a a)) (:goal (and)))", d)
    with pytest.raises(PDDLSemanticError):
        parse_problem("(define (problem q) (:domain blocks) (:objects a) (:init (on a z)) (:goal (and)))", d)
    with pytest.raises(PDDLSemanticError):
        parse_problem("(define (problem q) (:domain blocks) (:objects a) (:init (on a)) (:goal (and)))", d)


def test_write_problem_roundtrip():
    b = load_domain("gripper")
    for p in b.problems[:3]:
        q = parse_problem(write_problem(p.name, b.domain.name, p.init, p.goal), b.domain)
        assert q.init == p.init and q.goal == p.goal


def _pick_model():
    b = load_domain("blocks")
    truth = b.truth
    x = Var("?x")
    pre = Conjunction((lit("clear", "?x"), lit("ontable", "?x"), lit("handempty")), (x,))
    eff = (lit("holding", "?x"), lit("ontable", "?x", negated=True), lit("clear", "?x", negated=True),
           lit("handempty", negated=True))
    noisy = NDR(lit("pick-up", "?x"), pre, ((0.8, eff), (0.2, NOISE)))
    return truth.with_rules("pick-up", (noisy,))


def test_write_ndrs_noise_roundtrip():
    m = _pick_model()
    text = write_ndrs(m)
    assert "probabilistic 0.8" in text and "noise=1" in text
    back = read_ndrs(text)
    assert back.fingerprint == m.fingerprint
    with pytest.raises(ModelInvalidError):
        compile_ground_truth(parse_domain(text))


def test_default_rule_written_with_empty_effect():
    m = NDRSet.empty(load_domain("blocks").truth.predicates, load_domain("blocks").truth.action_predicates)
    text = write_ndrs(m)
    assert "; @ndr pick-up-default default" in text
    assert ":effect (and)" in text
    assert read_ndrs(text).fingerprint == m.fingerprint


def test_three_block_enumeration_size():
    # 13 table configurations with an empty hand, 3 * 3 with one block held
    assert len(three_block_states()) == 13 + 9


def test_learned_blocks_roundtrip_predictions_agree():
    m = load_domain("blocks").truth
    back = read_ndrs(write_ndrs(m, "blocks"))
    for s in three_block_states():
        for a in ground_actions(m.action_predicates, s):
            assert most_likely_next(back, s, a) == most_likely_next(m, s, a)
