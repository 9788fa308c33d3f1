"""Tile sets for the image 8-puzzle."""

from __future__ import annotations

import numpy as np

from ..ndcore.rng import RngStream
from .imageio import area_downsample, equalize

TILE = 14

# 3x5 bitmap digits; scaled 2x and centred in a 14x14 tile
_FONT = {
    0: ("111", "101", "101", "101", "111"),
    1: ("010", "110", "010", "010", "111"),
    2: ("111", "001", "111", "100", "111"),
    3: ("111", "001", "111", "001", "111"),
    4: ("101", "101", "111", "001", "001"),
    5: ("111", "100", "111", "001", "111"),
    6: ("111", "100", "111", "101", "111"),
    7: ("111", "001", "001", "001", "001"),
    8: ("111", "101", "111", "101", "111"),
    9: ("111", "101", "111", "001", "111"),
}


def digit_glyph(d: int) -> np.ndarray:
    bitmap = np.array([[c == "1" for c in row] for row in _FONT[d]], dtype=np.float32)
    big = np.kron(bitmap, np.ones((2, 2), dtype=np.float32))  # 10 x 6
    tile = np.zeros((TILE, TILE), dtype=np.float32)
    tile[2:12, 4:10] = big
    return tile


class TileSet:
    """Nine equally sized greyscale tiles; index 0 plays the blank."""

    def __init__(self, tiles, source="custom"):
        tiles = np.asarray(tiles, dtype=np.float32)
        if tiles.ndim != 3 or len(tiles) != 9:
            raise ValueError(f"need 9 tiles, got array of shape {tiles.shape}")
        if tiles.min() < 0 or tiles.max() > 1:
            raise ValueError("tile values must lie in [0, 1]")
        self.tiles = tiles
        self.source = source

    @property
    def tile_shape(self):
        return self.tiles.shape[1:]

    @classmethod
    def digits(cls) -> "TileSet":
        return cls([digit_glyph(d) for d in range(9)], source="digits")

    @classmethod
    def from_mnist(cls, images, labels, rng: RngStream | None = None) -> "TileSet":
        """One example of each digit 0..8, shrunk to 14x14 by area averaging."""
        rng = rng or RngStream(0)
        tiles = []
        for d in range(9):
            idx = np.flatnonzero(np.asarray(labels) == d)
            if len(idx) == 0:
                raise ValueError(f"no MNIST example of digit {d}")
            img = images[idx[int(rng.integers(len(idx)))]]
            tiles.append(area_downsample(img, TILE, TILE))
        return cls(np.clip(tiles, 0, 1), source="mnist")

    @classmethod
    def from_photograph(cls, img, size: int = 3 * TILE) -> "TileSet":
        """Greyscale photo -> equalised, centre-cropped square -> 3x3 patches.

        Patch 0 (top-left) acts as the blank.
        """
        img = np.asarray(img, dtype=np.float64)
        if img.ndim == 3:
            img = img @ np.array([0.299, 0.587, 0.114])[: img.shape[2]]
        h, w = img.shape
        side = min(h, w)
        y0, x0 = (h - side) // 2, (w - side) // 2
        square = area_downsample(img[y0 : y0 + side, x0 : x0 + side], size, size)
        square = equalize(square)
        t = size // 3
        tiles = [square[r * t : (r + 1) * t, c * t : (c + 1) * t] for r in range(3) for c in range(3)]
        return cls(tiles, source="photograph")


def synthetic_photograph(kind: str, size: int = 128) -> np.ndarray:
    """Deterministic textured stand-ins for the photograph puzzles."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    if kind == "mandrill":
        img = (
            np.sin(9 * xx + 3 * np.sin(5 * yy))
            + np.cos(13 * yy * (1 + xx))
            + 0.5 * np.sin(40 * (xx - 0.5) ** 2 + 30 * (yy - 0.4) ** 2)
        )
    elif kind == "spider":
        r = np.hypot(xx - 0.5, yy - 0.5)
        a = np.arctan2(yy - 0.5, xx - 0.5)
        img = np.cos(40 * r) * 0.6 + np.cos(8 * a) * 0.8 + 2 * yy - xx
    else:
        raise ValueError(f"unknown synthetic photograph {kind!r}")
    img = img - img.min()
    return (img / img.max()).astype(np.float32)
