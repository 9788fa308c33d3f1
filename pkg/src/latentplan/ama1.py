"""Oracular action model: one grounded STRIPS action per observed transition.

A transition ``(s, t)`` of bitvectors becomes an action whose precondition is
the full state ``s`` (one literal per bit) and whose effects flip exactly the
bits that differ, adding the new polarity and deleting the old one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class InapplicableAction(Exception):
    """The state does not satisfy the action's precondition."""


class Proposition(NamedTuple):
    bit: int
    value: bool

    def __str__(self):
        return f"b{self.bit}-{'true' if self.value else 'false'}"

    @classmethod
    def parse(cls, name: str) -> "Proposition":
        m = re.fullmatch(r"b(\d+)-(true|false)", name)
        if not m:
            raise ValueError(f"not a bit proposition: {name!r}")
        return cls(int(m.group(1)), m.group(2) == "true")


def literals(bits) -> frozenset:
    return frozenset(Proposition(j, bool(v)) for j, v in enumerate(np.asarray(bits).ravel()))


def assignment(props, n_bits: int) -> np.ndarray:
    """Proposition set -> bit array; raises if a bit is missing or doubly assigned."""
    out = np.full(n_bits, -1, dtype=np.int8)
    for p in props:
        if out[p.bit] != -1 and out[p.bit] != int(p.value):
            raise ValueError(f"bit {p.bit} holds both polarities")
        out[p.bit] = int(p.value)
    if (out < 0).any():
        raise ValueError(f"bits {np.flatnonzero(out < 0).tolist()} unassigned")
    return out.astype(np.uint8)


@dataclass(frozen=True)
class GroundAction:
    id: int
    pre: frozenset
    add: frozenset
    delete: frozenset
    cost: int = 1

    @property
    def name(self):
        return f"a{self.id}"

    @property
    def is_self_loop(self):
        return not self.add and not self.delete


def action_from_transition(i: int, s, t) -> GroundAction:
    s = np.asarray(s, dtype=np.uint8)
    t = np.asarray(t, dtype=np.uint8)
    changed = np.flatnonzero(s != t)
    add = frozenset(Proposition(int(j), bool(t[j])) for j in changed)
    delete = frozenset(Proposition(int(j), bool(s[j])) for j in changed)
    return GroundAction(i, literals(s), add, delete)


class StripsProblem:
    """Grounded unit-cost STRIPS problem over ``2 * n_bits`` propositions.

    Actions are stored as aligned ``(pre, post)`` bit arrays sorted by
    ``(pre, post)``; ``GroundAction`` views are built on demand.
    """

    def __init__(self, n_bits: int, pre: np.ndarray, post: np.ndarray, init=None, goal=None):
        self.n_bits = n_bits
        self.pre = np.asarray(pre, dtype=np.uint8).reshape(-1, n_bits)
        self.post = np.asarray(post, dtype=np.uint8).reshape(-1, n_bits)
        self.init = None if init is None else np.asarray(init, dtype=np.uint8)
        self.goal = None if goal is None else np.asarray(goal, dtype=np.uint8)
        self._index = None

    def __len__(self):
        return len(self.pre)

    def __eq__(self, other):
        if not isinstance(other, StripsProblem):
            return NotImplemented
        same = lambda a, b: (a is None and b is None) or (a is not None and b is not None and np.array_equal(a, b))
        return (
            self.n_bits == other.n_bits
            and np.array_equal(self.pre, other.pre)
            and np.array_equal(self.post, other.post)
            and same(self.init, other.init)
            and same(self.goal, other.goal)
        )

    @property
    def propositions(self):
        return [Proposition(j, v) for j in range(self.n_bits) for v in (True, False)]

    def action(self, i: int) -> GroundAction:
        return action_from_transition(i, self.pre[i], self.post[i])

    @property
    def actions(self):
        return [self.action(i) for i in range(len(self))]

    @property
    def self_loops(self) -> list[int]:
        return np.flatnonzero(np.all(self.pre == self.post, axis=1)).tolist()

    def with_task(self, init, goal) -> "StripsProblem":
        out = StripsProblem(self.n_bits, self.pre, self.post, init, goal)
        out._index = self._index
        return out

    def successor_index(self) -> dict:
        """``pre-state bytes -> [(action id, post-state bytes), ...]``."""
        if self._index is None:
            index: dict = {}
            pre_keys = [r.tobytes() for r in self.pre]
            post_keys = [r.tobytes() for r in self.post]
            for i, (k, t) in enumerate(zip(pre_keys, post_keys)):
                index.setdefault(k, []).append((i, t))
            self._index = index
        return self._index


def compile(transitions, n_bits: int | None = None) -> StripsProblem:
    """Deduplicate and canonically order transitions, one action each.

    ``transitions`` is either a ``(pre, post)`` pair of ``(K, N)`` arrays or
    an iterable of ``(s, t)`` bitvector pairs.
    """
    if isinstance(transitions, tuple) and len(transitions) == 2 and np.ndim(transitions[0]) == 2:
        pre, post = (np.asarray(a, dtype=np.uint8) for a in transitions)
    else:
        pairs = list(transitions)
        if not pairs:
            n = n_bits or 0
            return StripsProblem(n, np.zeros((0, n), np.uint8), np.zeros((0, n), np.uint8))
        lengths = {len(s) for s, _ in pairs} | {len(t) for _, t in pairs}
        if len(lengths) != 1:
            raise ValueError(f"bitvector length mismatch: {sorted(lengths)}")
        pre = np.array([s for s, _ in pairs], dtype=np.uint8)
        post = np.array([t for _, t in pairs], dtype=np.uint8)
    if pre.shape != post.shape:
        raise ValueError(f"bitvector length mismatch: {pre.shape} vs {post.shape}")
    if n_bits is not None and pre.shape[1] != n_bits:
        raise ValueError(f"expected {n_bits} bits, got {pre.shape[1]}")
    if ((pre > 1) | (post > 1)).any():
        raise ValueError("bitvectors must be 0/1")
    n = pre.shape[1]
    both = np.ascontiguousarray(np.concatenate([pre, post], axis=1))
    rows = np.unique(both.view(np.dtype((np.void, 2 * n))).ravel())
    uniq = np.frombuffer(rows.tobytes(), dtype=np.uint8).reshape(-1, 2 * n)
    return StripsProblem(n, uniq[:, :n].copy(), uniq[:, n:].copy())


def step(s, action: GroundAction) -> np.ndarray:
    """``(s \\ del) U add`` for an applicable action."""
    bits = np.asarray(s)
    if bits.ndim != 1 or ((bits != 0) & (bits != 1)).any():
        raise ValueError("state must be a full 0/1 assignment")
    state = literals(bits)
    if not action.pre <= state:
        raise InapplicableAction(f"{action.name} is not applicable")
    return assignment((state - action.delete) | action.add, len(bits))


# -- PDDL -------------------------------------------------------------------

def _conj(props) -> str:
    return "(and " + " ".join(f"({p})" for p in props) + ")" if props else "(and)"


def _effect(action: GroundAction) -> str:
    parts = []
    for add in sorted(action.add):
        (old,) = [d for d in action.delete if d.bit == add.bit]
        parts.append(f"({add}) (not ({old}))")
    return "(and " + " ".join(parts) + ")" if parts else "(and)"


def _sorted_props(bits):
    return [Proposition(j, bool(v)) for j, v in enumerate(bits)]


def emit_pddl(problem: StripsProblem, domain_name="latent", problem_name="latent-problem"):
    """Returns ``(domain text, problem text)``; byte-deterministic."""
    if problem.init is None or problem.goal is None:
        raise ValueError("emit_pddl: init and goal must be set")
    domain_name, problem_name = domain_name.lower(), problem_name.lower()
    lines = [
        f"(define (domain {domain_name})",
        "  (:requirements :strips)",
        "  (:predicates",
    ]
    lines += [f"    ({p})" for p in problem.propositions]
    lines[-1] += ")"
    for i in range(len(problem)):
        a = problem.action(i)
        lines += [
            f"  (:action {a.name}",
            "    :parameters ()",
            f"    :precondition {_conj(_sorted_props(problem.pre[i]))}",
            f"    :effect {_effect(a)})",
        ]
    lines[-1] += ")"
    domain = "\n".join(lines) + "\n"

    prob = "\n".join(
        [
            f"(define (problem {problem_name})",
            f"  (:domain {domain_name})",
            "  (:init " + " ".join(f"({p})" for p in _sorted_props(problem.init)) + ")",
            f"  (:goal {_conj(_sorted_props(problem.goal))}))",
        ]
    ) + "\n"
    return domain, prob


def _sexp(text: str):
    tokens = re.findall(r"\(|\)|[^\s()]+", re.sub(r";[^\n]*", "", text).lower())
    stack = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise ValueError("unbalanced parentheses")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1 or len(stack[0]) != 1:
        raise ValueError("malformed PDDL")
    return stack[0][0]


def _atoms(expr) -> tuple[list, list]:
    """Flatten an ``and`` of atoms / negated atoms into (positive, negative)."""
    if not expr:
        return [], []
    if expr[0] == "and":
        pos, neg = [], []
        for e in expr[1:]:
            p, n = _atoms(e)
            pos += p
            neg += n
        return pos, neg
    if expr[0] == "not":
        return [], [Proposition.parse(expr[1][0])]
    return [Proposition.parse(expr[0])], []


def parse_pddl(domain_text: str, problem_text: str) -> StripsProblem:
    """Read back what ``emit_pddl`` writes."""
    dom = _sexp(domain_text)
    preds = next(sec for sec in dom if isinstance(sec, list) and sec and sec[0] == ":predicates")
    n_bits = len(preds[1:]) // 2
    pre, post = [], []
    for sec in dom:
        if not (isinstance(sec, list) and sec and sec[0] == ":action"):
            continue
        fields = dict(zip(sec[2::2], sec[3::2]))
        p, _ = _atoms(fields[":precondition"])
        s = assignment(p, n_bits)
        add, dele = _atoms(fields[":effect"])
        t = assignment((set(p) - set(dele)) | set(add), n_bits)
        pre.append(s)
        post.append(t)
    prob = _sexp(problem_text)
    init = goal = None
    for sec in prob:
        if isinstance(sec, list) and sec and sec[0] == ":init":
            init = assignment([Proposition.parse(a[0]) for a in sec[1:]], n_bits)
        if isinstance(sec, list) and sec and sec[0] == ":goal":
            goal = assignment(_atoms(sec[1])[0], n_bits)
    return StripsProblem(
        n_bits,
        np.array(pre, dtype=np.uint8).reshape(-1, n_bits),
        np.array(post, dtype=np.uint8).reshape(-1, n_bits),
        init,
        goal,
    )
