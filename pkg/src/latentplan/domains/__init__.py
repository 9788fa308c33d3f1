"""Ground-truth puzzle domains: successors, rendering, classification,
instance sampling and plan validation."""

from __future__ import annotations

from .base import (
    Domain,
    Instance,
    InvalidState,
    bfs_distances,
    bfs_path_length,
    random_walk,
    reachable_states,
    sample_instances,
    validate_plan,
)
from .hanoi import Hanoi
from .lightsout import LightsOut, TwistedLightsOut
from .puzzle8 import EightPuzzle
from .tiles import TileSet, synthetic_photograph


def _tileset(spec: str) -> TileSet:
    from .imageio import read_idx_images, read_idx_labels, read_pgm

    if spec == "digits":
        return TileSet.digits()
    if spec in ("mandrill", "spider"):
        return TileSet.from_photograph(synthetic_photograph(spec))
    kind, _, path = spec.partition(":")
    if kind == "photo":
        return TileSet.from_photograph(read_pgm(path))
    if kind == "mnist":
        images, labels = path.split(",")
        return TileSet.from_mnist(read_idx_images(images), read_idx_labels(labels))
    raise ValueError(f"unknown tile set {spec!r}")


def make(spec: dict) -> Domain:
    """Build a domain from its ``describe()`` dict."""
    spec = dict(spec)
    name = spec.pop("name")
    if name == "puzzle8":
        tiles = spec.get("tiles", "digits")
        return EightPuzzle(_tileset(tiles), tiles_spec=tiles)
    if name == "lightsout":
        return LightsOut(**spec)
    if name == "twisted_lightsout":
        return TwistedLightsOut(**spec)
    if name == "hanoi":
        return Hanoi(**spec)
    raise ValueError(f"unknown domain {name!r}")


__all__ = [
    "Domain",
    "EightPuzzle",
    "Hanoi",
    "Instance",
    "InvalidState",
    "LightsOut",
    "TileSet",
    "TwistedLightsOut",
    "bfs_distances",
    "bfs_path_length",
    "make",
    "random_walk",
    "reachable_states",
    "sample_instances",
    "synthetic_photograph",
    "validate_plan",
]
