from __future__ import annotations

import itertools

import numpy as np

from .base import Domain, InvalidState
from .tiles import TileSet

SIDE = 3
CELLS = SIDE * SIDE


def _neighbors(cell):
    r, c = divmod(cell, SIDE)
    out = []
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        rr, cc = r + dr, c + dc
        if 0 <= rr < SIDE and 0 <= cc < SIDE:
            out.append(rr * SIDE + cc)
    return out


NEIGHBORS = [_neighbors(i) for i in range(CELLS)]


class EightPuzzle(Domain):
    """3x3 sliding tiles; ``state[cell] = tile`` and tile 0 is the blank.

    The goal places tile k in cell k.
    """

    name = "puzzle8"

    def __init__(self, tiles: TileSet | None = None, tiles_spec: str = "digits"):
        self.tiles = tiles or TileSet.digits()
        self.tiles_spec = tiles_spec
        th, tw = self.tiles.tile_shape
        self.image_shape = (SIDE * th, SIDE * tw)
        t = self.tiles.tiles.reshape(9, -1)
        pair = np.abs(t[:, None, :] - t[None, :, :]).mean(axis=-1)
        np.fill_diagonal(pair, np.inf)
        self._reject = 0.5 * pair.min(axis=1)

    def describe(self):
        return {"name": self.name, "tiles": self.tiles_spec}

    def goal_state(self):
        return tuple(range(CELLS))

    def check(self, s):
        s = tuple(int(v) for v in s)
        if sorted(s) != list(range(CELLS)):
            raise InvalidState(f"not a permutation of 0..8: {s}")
        return s

    def successors(self, s):
        s = self.check(s)
        blank = s.index(0)
        out = []
        for n in NEIGHBORS[blank]:
            t = list(s)
            t[blank], t[n] = t[n], 0
            out.append(tuple(t))
        return out

    def render(self, s):
        s = self.check(s)
        th, tw = self.tiles.tile_shape
        img = np.zeros(self.image_shape, dtype=np.float32)
        for cell, tile in enumerate(s):
            r, c = divmod(cell, SIDE)
            img[r * th : (r + 1) * th, c * tw : (c + 1) * tw] = self.tiles.tiles[tile]
        return img

    def classify(self, img):
        img = np.asarray(img, dtype=np.float32)
        if img.shape != self.image_shape:
            return None
        th, tw = self.tiles.tile_shape
        flat = self.tiles.tiles.reshape(9, -1)
        state = []
        for cell in range(CELLS):
            r, c = divmod(cell, SIDE)
            patch = img[r * th : (r + 1) * th, c * tw : (c + 1) * tw].reshape(-1)
            d = np.abs(flat - patch).mean(axis=1)
            best = int(np.argmin(d))
            if d[best] > self._reject[best]:
                return None
            state.append(best)
        if len(set(state)) != CELLS:
            return None
        return tuple(state)

    def all_states(self):
        return [tuple(p) for p in itertools.permutations(range(CELLS))]

    def to_bits(self, s):
        s = self.check(s)
        return np.array([(tile >> k) & 1 for tile in s for k in range(4)], dtype=np.uint8)

    def from_bits(self, bits):
        b = np.asarray(bits).reshape(CELLS, 4)
        return self.check(int((b[i] << np.arange(4)).sum()) for i in range(CELLS))
