from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Hashable

import numpy as np

from ..ndcore.rng import RngStream


class InvalidState(ValueError):
    pass


class Domain:
    """Ground-truth puzzle: successor rule, renderer, classifier, bit codec.

    States are hashable tuples.  ``to_bits`` is an exact (identity) encoding
    used to exercise the symbolic machinery without a trained autoencoder.
    """

    name = "domain"
    image_shape: tuple[int, int] = (0, 0)

    def goal_state(self) -> tuple:
        raise NotImplementedError

    def check(self, s) -> tuple:
        raise NotImplementedError

    def successors(self, s) -> list[tuple]:
        raise NotImplementedError

    def render(self, s) -> np.ndarray:
        raise NotImplementedError

    def classify(self, img: np.ndarray):
        """Nearest-template state, or ``None`` if the image is not a valid state."""
        raise NotImplementedError

    def all_states(self):
        """Every state of the domain (only for small domains)."""
        raise NotImplementedError

    def to_bits(self, s) -> np.ndarray:
        raise NotImplementedError

    def from_bits(self, bits) -> tuple:
        raise NotImplementedError

    def describe(self) -> dict:
        """JSON-able constructor arguments; see ``domains.make``."""
        raise NotImplementedError

    # shared helpers

    def gt_successors(self, s) -> set:
        return set(self.successors(self.check(s)))

    def render_many(self, states) -> np.ndarray:
        return np.stack([self.render(s) for s in states]).astype(np.float32)

    def transitions(self, states=None):
        """All (s, t) pairs out of ``states`` (default: every state)."""
        states = self.all_states() if states is None else states
        return [(s, t) for s in states for t in self.successors(s)]


@dataclass
class Instance:
    init: tuple
    goal: tuple
    init_image: np.ndarray
    goal_image: np.ndarray
    walk_length: int


def bfs_distances(domain: Domain, source) -> dict:
    """Unit-cost distances from ``source`` over the ground-truth graph."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        s = queue.popleft()
        d = dist[s] + 1
        for t in domain.successors(s):
            if t not in dist:
                dist[t] = d
                queue.append(t)
    return dist


def bfs_path_length(domain: Domain, init, goal, limit: int | None = None) -> int | None:
    """Shortest path length, stopping early once ``goal`` is popped."""
    if init == goal:
        return 0
    dist = {init: 0}
    queue = deque([init])
    while queue:
        s = queue.popleft()
        if limit is not None and dist[s] >= limit:
            continue
        for t in domain.successors(s):
            if t not in dist:
                dist[t] = dist[s] + 1
                if t == goal:
                    return dist[t]
                queue.append(t)
    return None


def validate_plan(domain: Domain, init, goal, states) -> bool:
    """True iff ``states`` starts at init, ends at goal and every step is a
    ground-truth move.  An empty list stands for the empty plan."""
    states = [tuple(s) if s is not None else None for s in states]
    if not states:
        return init == goal
    if any(s is None for s in states):
        return False
    if states[0] != tuple(init) or states[-1] != tuple(goal):
        return False
    for s, t in zip(states, states[1:]):
        try:
            if t not in domain.gt_successors(s):
                return False
        except InvalidState:
            return False
    return True


def random_walk(domain: Domain, start, length: int, rng: RngStream, max_restarts=1000) -> list:
    """Self-avoiding walk of exactly ``length`` moves; restarts on dead ends."""
    if length < 1:
        raise ValueError("walk length must be at least 1")
    for _ in range(max_restarts):
        path = [start]
        seen = {start}
        while len(path) <= length:
            options = [t for t in domain.successors(path[-1]) if t not in seen]
            if not options:
                break
            options.sort()
            t = options[int(rng.integers(len(options)))]
            path.append(t)
            seen.add(t)
        if len(path) == length + 1:
            return path
    raise RuntimeError(f"no self-avoiding walk of length {length} found")


def sample_instances(domain: Domain, count: int, walk_length: int, rng: RngStream, goal=None):
    goal = domain.goal_state() if goal is None else domain.check(goal)
    goal_image = domain.render(goal)
    out = []
    for _ in range(count):
        path = random_walk(domain, goal, walk_length, rng)
        init = path[-1]
        out.append(Instance(init, goal, domain.render(init), goal_image.copy(), walk_length))
    return out


def reachable_states(domain: Domain, source) -> list[Hashable]:
    return list(bfs_distances(domain, source))
