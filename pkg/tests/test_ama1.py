import numpy as np
import pytest

from latentplan import ama1, domains
from latentplan.ama1 import Proposition


def _bits(text):
    return np.array([int(c) for c in text], dtype=np.uint8)


def _identity_problem(domain, states=None):
    pairs = domain.transitions(states)
    pre = np.array([domain.to_bits(s) for s, _ in pairs])
    post = np.array([domain.to_bits(t) for _, t in pairs])
    return ama1.compile((pre, post))


def test_compile_single_transition():
    p = ama1.compile([(_bits("101"), _bits("001"))])
    a = p.action(0)
    assert a.pre == {Proposition(0, True), Proposition(1, False), Proposition(2, True)}
    assert a.add == {Proposition(0, False)}
    assert a.delete == {Proposition(0, True)}
    assert str(Proposition(0, False)) == "b0-false"


def test_self_loop_is_flagged():
    p = ama1.compile([(_bits("11"), _bits("11")), (_bits("11"), _bits("01"))])
    loops = p.self_loops
    assert len(loops) == 1 and p.action(loops[0]).is_self_loop


def test_compile_deduplicates():
    t = [(_bits("10"), _bits("00"))] * 3 + [(_bits("00"), _bits("10"))]
    assert len(ama1.compile(t)) == 2


def test_compile_length_mismatch():
    with pytest.raises(ValueError):
        ama1.compile([(_bits("10"), _bits("100"))])


def test_hanoi4_action_count():
    assert len(_identity_problem(domains.Hanoi(4))) == 240


def test_step_semantics():
    a = ama1.compile([(_bits("101"), _bits("001"))]).action(0)
    np.testing.assert_array_equal(ama1.step(_bits("101"), a), _bits("001"))
    loop = ama1.compile([(_bits("01"), _bits("01"))]).action(0)
    np.testing.assert_array_equal(ama1.step(_bits("01"), loop), _bits("01"))
    with pytest.raises(ama1.InapplicableAction):
        ama1.step(_bits("111"), a)
    with pytest.raises(ValueError) as err:
        ama1.step(np.array([2, 0, 1]), a)
    assert not isinstance(err.value, ama1.InapplicableAction)


def test_step_soundness_over_compiled_model():
    p = _identity_problem(domains.LightsOut(3))
    for i in range(len(p)):
        np.testing.assert_array_equal(ama1.step(p.pre[i], p.action(i)), p.post[i])


def test_polarity_consistency_along_walks():
    p = _identity_problem(domains.Hanoi(3))
    index = p.successor_index()
    rng = np.random.default_rng(0)
    state = domains.Hanoi(3).to_bits(domains.Hanoi(3).goal_state())
    for _ in range(200):
        options = index[state.tobytes()]
        i, _ = options[rng.integers(len(options))]
        lits = ama1.literals(ama1.step(state, p.action(i)))
        bits = [x.bit for x in lits]
        assert len(bits) == len(set(bits)) == p.n_bits
        state = ama1.step(state, p.action(i))


GOLDEN_DOMAIN = """\
(define (domain toy)
  (:requirements :strips)
  (:predicates
    (b0-true)
    (b0-false)
    (b1-true)
    (b1-false))
  (:action a0
    :parameters ()
    :precondition (and (b0-false) (b1-true))
    :effect (and (b0-true) (not (b0-false)) (b1-false) (not (b1-true))))
  (:action a1
    :parameters ()
    :precondition (and (b0-true) (b1-false))
    :effect (and (b0-false) (not (b0-true)))))
"""

GOLDEN_PROBLEM = """\
(define (problem toy-1)
  (:domain toy)
  (:init (b0-true) (b1-false))
  (:goal (and (b0-false) (b1-true))))
"""


def _toy():
    p = ama1.compile([(_bits("10"), _bits("00")), (_bits("01"), _bits("10"))])
    return p.with_task(_bits("10"), _bits("01"))


def test_pddl_golden():
    dom, prob = ama1.emit_pddl(_toy(), "Toy", "toy-1")
    assert dom == GOLDEN_DOMAIN
    assert prob == GOLDEN_PROBLEM


def test_pddl_effect_conjunct():
    dom, _ = ama1.emit_pddl(_toy(), "toy", "t")
    assert "(and (b0-false) (not (b0-true)))" in dom


def test_pddl_round_trip():
    p = _toy()
    assert ama1.parse_pddl(*ama1.emit_pddl(p)) == p
    big = _identity_problem(domains.Hanoi(3))
    big = big.with_task(big.pre[0], big.post[-1])
    assert ama1.parse_pddl(*ama1.emit_pddl(big)) == big


def test_pddl_empty_action_set():
    p = ama1.StripsProblem(2, np.zeros((0, 2)), np.zeros((0, 2)), _bits("00"), _bits("11"))
    dom, prob = ama1.emit_pddl(p)
    assert ":action" not in dom
    assert ama1.parse_pddl(dom, prob) == p


def test_pddl_requires_task():
    with pytest.raises(ValueError):
        ama1.emit_pddl(ama1.compile([(_bits("1"), _bits("0"))]))


def test_pddl_deterministic():
    assert ama1.emit_pddl(_toy()) == ama1.emit_pddl(_toy())
