"""Image plumbing: PGM/PPM files, MNIST IDX import, swirl, preprocessing and
input corruption."""

from __future__ import annotations

import gzip
import struct

import numpy as np
from scipy.ndimage import map_coordinates

from ..ndcore.rng import RngStream


def write_pgm(path, img: np.ndarray):
    """Binary greyscale PGM (P5), 8 bit; values in [0, 1] are scaled to 0..255."""
    arr = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255), 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(arr.tobytes())


def _tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens (skipping comments)
    and the offset just past the single whitespace after the last one."""
    out = []
    pos = 0
    while len(out) < count:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while data[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        out.append(data[start:pos])
    return out, pos + 1


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    (magic, w, h, maxval), pos = _tokens(data, 4)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(w), int(h), int(maxval)
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return arr.astype(np.float32) / maxval


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    (magic, w, h, maxval), pos = _tokens(data, 4)
    if magic != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h = int(w), int(h)
    arr = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return arr.reshape(h, w, 3).astype(np.float32) / int(maxval)


def write_ppm_strip(path, images, gap: int = 2):
    """Lay greyscale images left to right (grey separators) in one P6 file."""
    images = [np.clip(np.asarray(im, dtype=np.float64), 0, 1) for im in images]
    h = max(im.shape[0] for im in images)
    w = sum(im.shape[1] for im in images) + gap * (len(images) - 1)
    canvas = np.full((h, w), 0.5)
    x = 0
    for im in images:
        canvas[: im.shape[0], x : x + im.shape[1]] = im
        x += im.shape[1] + gap
    rgb = np.repeat(np.rint(canvas * 255).astype(np.uint8)[:, :, None], 3, axis=2)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(rgb.tobytes())


def read_idx_images(path) -> np.ndarray:
    """MNIST IDX image file (magic 0x00000803), optionally gzipped; returns
    float32 in [0, 1] of shape (count, rows, cols)."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        data = f.read()
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != 0x00000803:
        raise ValueError(f"{path}: bad IDX magic {magic:#010x}")
    arr = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16)
    return arr.reshape(count, rows, cols).astype(np.float32) / 255.0


def read_idx_labels(path) -> np.ndarray:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        data = f.read()
    magic, count = struct.unpack(">II", data[:8])
    if magic != 0x00000801:
        raise ValueError(f"{path}: bad IDX label magic {magic:#010x}")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8).copy()


def area_downsample(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Average-pool resize; exact when the sizes divide, otherwise by
    fractional-overlap weights."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape

    def weights(n_in, n_out):
        m = np.zeros((n_out, n_in))
        scale = n_in / n_out
        for i in range(n_out):
            lo, hi = i * scale, (i + 1) * scale
            for j in range(int(np.floor(lo)), int(np.ceil(hi))):
                m[i, j] = min(hi, j + 1) - max(lo, j)
        return m / scale

    return (weights(h, out_h) @ img @ weights(w, out_w).T).astype(np.float32)


def equalize(img: np.ndarray, bins: int = 256) -> np.ndarray:
    """Histogram equalisation followed by a contrast stretch to [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    hist, edges = np.histogram(img, bins=bins, range=(img.min(), img.max() + 1e-12))
    cdf = np.cumsum(hist).astype(np.float64)
    cdf /= cdf[-1]
    out = np.interp(img, edges[:-1], cdf)
    lo, hi = out.min(), out.max()
    if hi - lo < 1e-12:
        return np.zeros_like(out, dtype=np.float32)
    return ((out - lo) / (hi - lo)).astype(np.float32)


def swirl(img: np.ndarray, strength: float = 3.0, radius: float | None = None) -> np.ndarray:
    """Swirl about the image centre by inverse mapping.

    An output pixel at distance ``rho`` from the centre samples the input at
    its own angle plus ``strength * exp(-rho / (radius / 5))`` with bilinear
    interpolation; reads past the border clamp to the edge.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if radius is None:
        radius = 0.75 * min(h, w)
    if radius <= 0:
        raise ValueError("swirl radius must be positive")
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    rho = np.hypot(dy, dx)
    theta = np.arctan2(dy, dx) + strength * np.exp(-rho / (radius / 5.0))
    sy = cy + rho * np.sin(theta)
    sx = cx + rho * np.cos(theta)
    out = map_coordinates(img, [sy, sx], order=1, mode="nearest")
    return out.astype(np.float32)


def gaussian_corrupt(img: np.ndarray, sigma: float, rng: RngStream) -> np.ndarray:
    """Additive N(0, sigma^2) pixel noise, not clipped (matches the training noise)."""
    img = np.asarray(img, dtype=np.float32)
    return (img + rng.normal(img.shape, sigma)).astype(np.float32)


def saltpepper_corrupt(img: np.ndarray, p: float, rng: RngStream) -> np.ndarray:
    """Each pixel independently becomes 0 or 1 with probability p/2 each."""
    img = np.array(img, dtype=np.float32)
    u = rng.uniform(img.shape)
    img[u < p / 2] = 0.0
    img[(u >= p / 2) & (u < p)] = 1.0
    return img
