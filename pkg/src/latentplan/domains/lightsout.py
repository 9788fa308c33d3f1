from __future__ import annotations

import itertools

import numpy as np

from .base import Domain, InvalidState
from .imageio import swirl

BUTTON = 9


def plus_button() -> np.ndarray:
    b = np.zeros((BUTTON, BUTTON), dtype=np.float32)
    b[3:6, 1:8] = 1.0
    b[1:8, 3:6] = 1.0
    return b


class LightsOut(Domain):
    """n x n lights; pressing a cell toggles it and its 4-neighbours.

    Each lit cell is drawn as a 9x9 plus sign, so the image is 9n x 9n.
    The goal is all lights off.
    """

    name = "lightsout"

    def __init__(self, n: int = 4):
        if n < 1:
            raise ValueError("grid size must be positive")
        self.n = n
        self.image_shape = (BUTTON * n, BUTTON * n)
        self._press = []
        for cell in range(n * n):
            r, c = divmod(cell, n)
            mask = np.zeros(n * n, dtype=np.uint8)
            for dr, dc in ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < n and 0 <= cc < n:
                    mask[rr * n + cc] = 1
            self._press.append(mask)
        basis = np.stack([self._raw_cell_image(i) for i in range(n * n)])
        self._basis = basis.reshape(n * n, -1).T  # pixels x cells
        self._pinv = np.linalg.pinv(self._basis)

    def describe(self):
        return {"name": self.name, "n": self.n}

    def goal_state(self):
        return (0,) * (self.n * self.n)

    def check(self, s):
        s = tuple(int(v) for v in s)
        if len(s) != self.n * self.n or any(v not in (0, 1) for v in s):
            raise InvalidState(f"not a {self.n}x{self.n} light grid: {s}")
        return s

    def press(self, s, cell):
        s = np.array(self.check(s), dtype=np.uint8)
        return tuple(int(v) for v in s ^ self._press[cell])

    def successors(self, s):
        s = self.check(s)
        return [self.press(s, cell) for cell in range(self.n * self.n)]

    def _raw_cell_image(self, cell):
        img = np.zeros(self.image_shape, dtype=np.float32)
        r, c = divmod(cell, self.n)
        img[r * BUTTON : (r + 1) * BUTTON, c * BUTTON : (c + 1) * BUTTON] = plus_button()
        return self._post(img)

    def _post(self, img):
        return img

    def render(self, s):
        s = self.check(s)
        img = np.zeros(self.image_shape, dtype=np.float32)
        for cell, on in enumerate(s):
            if on:
                r, c = divmod(cell, self.n)
                img[r * BUTTON : (r + 1) * BUTTON, c * BUTTON : (c + 1) * BUTTON] = plus_button()
        return self._post(img)

    def classify(self, img, tol: float = 0.35):
        """Least-squares fit of the per-cell button images; rejects when a
        coefficient is far from 0/1 or the fitted render leaves a large residual."""
        img = np.asarray(img, dtype=np.float64)
        if img.shape != self.image_shape:
            return None
        coef = self._pinv @ img.reshape(-1)
        state = np.rint(coef).astype(int)
        if np.any((state < 0) | (state > 1)) or np.abs(coef - state).max() > tol:
            return None
        state = tuple(int(v) for v in state)
        if np.abs(self.render(state) - img).mean() > 0.1:
            return None
        return state

    def all_states(self):
        return [tuple(p) for p in itertools.product((0, 1), repeat=self.n * self.n)]

    def to_bits(self, s):
        return np.array(self.check(s), dtype=np.uint8)

    def from_bits(self, bits):
        return self.check(np.asarray(bits).reshape(-1))


class TwistedLightsOut(LightsOut):
    """LightsOut rendered through a swirl about the image centre."""

    name = "twisted_lightsout"

    def __init__(self, n: int = 4, strength: float = 3.0, radius_ratio: float = 0.75):
        self.strength = strength
        self.radius_ratio = radius_ratio
        super().__init__(n)

    def describe(self):
        return {"name": self.name, "n": self.n, "strength": self.strength,
                "radius_ratio": self.radius_ratio}

    def _post(self, img):
        return swirl(img, self.strength, self.radius_ratio * min(img.shape))
