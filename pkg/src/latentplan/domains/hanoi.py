from __future__ import annotations

import itertools

import numpy as np

from .base import Domain, InvalidState

PEGS = 3
BAND = 4


class Hanoi(Domain):
    """Towers of Hanoi with ``disks`` disks; ``state[k]`` is the peg of disk k
    (disk 0 is the smallest).  Images are ``4d`` rows by ``3 * (4d + 4)``
    columns, each disk a 3px-thick bar in a 4px band, ``4(k + 1)`` px wide.
    """

    name = "hanoi"

    def __init__(self, disks: int = 4):
        if disks < 1:
            raise ValueError("need at least one disk")
        self.disks = disks
        self.peg_width = BAND * disks + 4
        self.image_shape = (BAND * disks, PEGS * self.peg_width)

    def describe(self):
        return {"name": self.name, "disks": self.disks}

    def goal_state(self):
        return (PEGS - 1,) * self.disks

    def initial_state(self):
        return (0,) * self.disks

    def check(self, s):
        s = tuple(int(v) for v in s)
        if len(s) != self.disks or any(v not in range(PEGS) for v in s):
            raise InvalidState(f"not a {self.disks}-disk Hanoi state: {s}")
        return s

    def successors(self, s):
        s = self.check(s)
        top = [None] * PEGS
        for disk in reversed(range(self.disks)):
            top[s[disk]] = disk  # smallest disk on each peg wins
        out = []
        for src in range(PEGS):
            d = top[src]
            if d is None:
                continue
            for dst in range(PEGS):
                if dst != src and (top[dst] is None or top[dst] > d):
                    t = list(s)
                    t[d] = dst
                    out.append(tuple(t))
        return out

    def _bar(self, disk):
        width = BAND * (disk + 1)
        left = (self.peg_width - width) // 2
        return left, left + width

    def render(self, s):
        s = self.check(s)
        img = np.zeros(self.image_shape, dtype=np.float32)
        for peg in range(PEGS):
            stack = [d for d in reversed(range(self.disks)) if s[d] == peg]  # bottom first
            for level, disk in enumerate(stack):
                row = self.image_shape[0] - BAND * (level + 1)
                lo, hi = self._bar(disk)
                x0 = peg * self.peg_width
                img[row + 1 : row + BAND, x0 + lo : x0 + hi] = 1.0
        return img

    def classify(self, img):
        img = np.asarray(img, dtype=np.float32)
        if img.shape != self.image_shape:
            return None
        templates = [np.zeros((BAND, self.peg_width), dtype=np.float32)]
        for disk in range(self.disks):
            t = np.zeros((BAND, self.peg_width), dtype=np.float32)
            lo, hi = self._bar(disk)
            t[1:, lo:hi] = 1.0
            templates.append(t)
        templates = np.stack(templates).reshape(len(templates), -1)
        sep = np.abs(templates[:, None] - templates[None]).mean(axis=-1)
        reject = 0.5 * sep[sep > 0].min()
        state = [None] * self.disks
        for peg in range(PEGS):
            below = None
            for level in range(self.disks):
                row = self.image_shape[0] - BAND * (level + 1)
                x0 = peg * self.peg_width
                patch = img[row : row + BAND, x0 : x0 + self.peg_width].reshape(-1)
                d = np.abs(templates - patch).mean(axis=1)
                best = int(np.argmin(d))
                if d[best] > reject:
                    return None
                if best == 0:
                    below = -1
                    continue
                disk = best - 1
                if below == -1 or (below is not None and disk >= below):
                    return None  # floating disk or larger on smaller
                if state[disk] is not None:
                    return None  # duplicated disk
                state[disk] = peg
                below = disk
        if any(v is None for v in state):
            return None
        return tuple(state)

    def all_states(self):
        return [tuple(p) for p in itertools.product(range(PEGS), repeat=self.disks)]

    def to_bits(self, s):
        s = self.check(s)
        return np.array([(peg >> k) & 1 for peg in s for k in range(2)], dtype=np.uint8)

    def from_bits(self, bits):
        b = np.asarray(bits).reshape(self.disks, 2)
        return self.check(int(b[i, 0] + 2 * b[i, 1]) for i in range(self.disks))
