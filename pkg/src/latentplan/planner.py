"""Forward A* over latent bitvectors.

States inside the search are ``bytes`` keys (one byte per bit, see
``key``/``unkey``) so they hash cheaply; successor functions map a key to a
list of ``(action id, successor key)``.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .ama1 import StripsProblem


def key(bits) -> bytes:
    return np.asarray(bits, dtype=np.uint8).tobytes()


def unkey(k: bytes) -> np.ndarray:
    return np.frombuffer(k, dtype=np.uint8)


def goal_count(s, g) -> int:
    """Number of bits where ``s`` and ``g`` differ."""
    s = np.asarray(s if not isinstance(s, bytes) else unkey(s))
    g = np.asarray(g if not isinstance(g, bytes) else unkey(g))
    if s.shape != g.shape:
        raise ValueError(f"goal_count: length mismatch {s.shape} vs {g.shape}")
    return int(np.count_nonzero(s != g))


def zero_heuristic(s, g) -> int:
    return 0


@dataclass
class SearchNode:
    state: bytes
    g: int
    h: int
    parent: "SearchNode | None" = None
    action: int | None = None

    @property
    def f(self):
        return self.g + self.h


@dataclass
class PlanResult:
    status: str  # solved | timeout | exhausted
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    expanded: int = 0
    generated: int = 0
    wall_time: float = 0.0

    @property
    def solved(self):
        return self.status == "solved"

    @property
    def length(self):
        return len(self.actions) if self.solved else None

    def bit_strings(self):
        return ["".join(str(int(b)) for b in unkey(s)) for s in self.states]

    def to_json(self):
        return {
            "status": self.status,
            "plan_length": self.length,
            "states": self.bit_strings(),
            "actions": [int(a) for a in self.actions],
            "expanded": self.expanded,
            "generated": self.generated,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_json(cls, obj) -> "PlanResult":
        states = [key(np.array([int(c) for c in s], dtype=np.uint8)) for s in obj["states"]]
        return cls(obj["status"], states, list(obj["actions"]), obj.get("expanded", 0),
                   obj.get("generated", 0), obj.get("wall_time", 0.0))


def astar(init, goal, succ_fn, h_fn=goal_count, time_limit: float | None = 180.0,
          max_expansions: int | None = None) -> PlanResult:
    """Best-first search on ``f = g + h``; ties prefer larger ``g`` then FIFO.

    ``init``/``goal`` may be bit arrays or keys.  The goal test is exact
    equality, applied when a node is popped.  ``h_fn(state_key, goal_key)``.
    """
    if time_limit is not None and time_limit <= 0:
        raise ValueError("time limit must be positive")
    if max_expansions is not None and max_expansions <= 0:
        raise ValueError("expansion limit must be positive")
    start = time.perf_counter()
    init = init if isinstance(init, bytes) else key(init)
    goal = goal if isinstance(goal, bytes) else key(goal)
    counter = itertools.count()
    root = SearchNode(init, 0, h_fn(init, goal))
    open_list = [(root.f, 0, next(counter), root)]
    best_g = {init: 0}
    closed = set()
    expanded = generated = 0
    status = "exhausted"
    while open_list:
        _, _, _, node = heapq.heappop(open_list)
        if node.state in closed:
            continue
        if node.state == goal:
            return _result(node, expanded, generated, start)
        if max_expansions is not None and expanded >= max_expansions:
            status = "timeout"
            break
        if time_limit is not None and time.perf_counter() - start > time_limit:
            status = "timeout"
            break
        closed.add(node.state)
        expanded += 1
        for action, t in succ_fn(node.state):
            if t in closed:
                continue
            g = node.g + 1
            if g >= best_g.get(t, np.inf):
                continue
            best_g[t] = g
            child = SearchNode(t, g, h_fn(t, goal), node, action)
            generated += 1
            heapq.heappush(open_list, (child.f, -g, next(counter), child))
    return PlanResult(status, expanded=expanded, generated=generated,
                      wall_time=time.perf_counter() - start)


def _result(node, expanded, generated, start):
    states, actions = [], []
    while node is not None:
        states.append(node.state)
        if node.action is not None:
            actions.append(node.action)
        node = node.parent
    return PlanResult("solved", states[::-1], actions[::-1], expanded, generated,
                      time.perf_counter() - start)


def replay(result: PlanResult, succ_fn) -> bool:
    """Re-check that every step of a solved plan is produced by ``succ_fn``."""
    if not result.solved:
        return False
    for s, a, t in zip(result.states, result.actions, result.states[1:]):
        if (a, t) not in set(succ_fn(s)):
            return False
    return True


# -- successor functions ------------------------------------------------------

def succ_strips(s, problem: StripsProblem) -> list:
    """All ``(action id, t)`` whose precondition holds in ``s``."""
    k = s if isinstance(s, bytes) else key(s)
    return list(problem.successor_index().get(k, ()))


def strips_successors(problem: StripsProblem):
    index = problem.successor_index()
    return lambda k: index.get(k, ())


def solve_strips(problem: StripsProblem, h_fn=zero_heuristic, **limits) -> PlanResult:
    if problem.init is None or problem.goal is None:
        raise ValueError("problem has no init/goal")
    return astar(problem.init, problem.goal, strips_successors(problem), h_fn, **limits)


class MissingModel(ValueError):
    pass


@dataclass
class SuccConfig:
    """Learned successor function: models plus one toggle per filter.

    ``sae_form`` picks what the SAE stability filter checks: ``"t"`` requires
    ``encode(decode(t)) == t`` for the candidate, ``"s"`` applies the same test
    to the expanded state instead.
    """

    aae: object
    ad: object = None
    sd: object = None
    sae: object = None
    ad_threshold: float = 0.5
    sd_threshold: float = 0.5
    used_only: bool = True
    use_ad: bool = True
    use_sd: bool = True
    use_sae: bool = True
    use_aae: bool = True
    sae_form: str = "t"

    def __post_init__(self):
        for name in ("ad_threshold", "sd_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.sae_form not in ("s", "t"):
            raise ValueError("sae_form is 's' or 't'")
        if self.aae is None:
            raise MissingModel("succ_ama2 needs an action autoencoder")
        for flag, model in (("use_ad", "ad"), ("use_sd", "sd"), ("use_sae", "sae")):
            if getattr(self, flag) and getattr(self, model) is None:
                raise MissingModel(f"{flag} is set but no {model} model was given")

    def without(self, *filters) -> "SuccConfig":
        """Copy with the named filters (``"ad"``, ``"sd"``, ...) switched off."""
        from dataclasses import replace

        return replace(self, **{f"use_{f}": False for f in filters})


def succ_ama2(s, cfg: SuccConfig) -> list:
    """``(label, t)`` pairs for ``s`` surviving every enabled filter.

    All labels are decoded in one batch; candidates reached by several labels
    keep the smallest label.  Output is sorted by label.
    """
    bits = unkey(s) if isinstance(s, bytes) else np.asarray(s, dtype=np.uint8)
    aae = cfg.aae
    labels = np.asarray(aae.used_labels if cfg.used_only else range(aae.config.labels), dtype=np.int64)
    if len(labels) == 0:
        return []
    s_rep = np.repeat(bits[None], len(labels), axis=0)
    t = aae.apply_label(labels, s_rep, check_used=False)
    keep = np.ones(len(labels), dtype=bool)
    if cfg.use_ad:
        keep &= cfg.ad.d2(np.concatenate([s_rep, t], axis=1)) >= cfg.ad_threshold
    if cfg.use_sd:
        keep &= cfg.sd.d2(t) >= cfg.sd_threshold
    if cfg.use_sae:
        if cfg.sae_form == "t":
            keep &= np.all(cfg.sae.autoencode_bits(t) == t, axis=1)
        elif not np.array_equal(cfg.sae.autoencode_bits(bits[None])[0], bits):
            keep[:] = False
    if cfg.use_aae and keep.any():
        idx = np.flatnonzero(keep)
        again = aae.apply_label(aae.action_label(t[idx], s_rep[idx]), s_rep[idx], check_used=False)
        keep[idx] &= np.all(again == t[idx], axis=1)
    out, seen = [], set()
    for label, row in zip(labels[keep], t[keep]):
        k = row.tobytes()
        if k not in seen:
            seen.add(k)
            out.append((int(label), k))
    return out


def ama2_successors(cfg: SuccConfig, cache: bool = True):
    """``succ_fn`` for ``astar``, memoised per state."""
    memo: dict = {}

    def succ(k):
        if not cache:
            return succ_ama2(k, cfg)
        if k not in memo:
            memo[k] = succ_ama2(k, cfg)
        return memo[k]

    return succ


def solve_ama2(init_bits, goal_bits, cfg: SuccConfig, h_fn=goal_count, **limits) -> PlanResult:
    return astar(init_bits, goal_bits, ama2_successors(cfg), h_fn, **limits)
