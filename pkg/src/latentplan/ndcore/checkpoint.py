"""``LPW1`` weight files.

Layout (all integers little-endian)::

    b"LPW1"
    u8   model kind (0 generic, 1 sae, 2 aae, 3 sd, 4 ad)
    u64  length of a UTF-8 JSON header, then the header
    u64  layer count
    per layer:
        u8   kind tag (index into ``layers.KINDS``)
        u64  tensor count
        per tensor: u64 rank, rank x u64 extents, float32 payload

The JSON header holds model metadata plus, for every named network, the
layer kinds, arguments and built input shapes (as an ordered list of
``[name, layers]`` pairs), so a file rebuilds itself.
Tensors of a layer are its parameters then its buffers, each in sorted name
order.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .layers import KINDS, LayerSpec
from .tensor import Tensor

MAGIC = b"LPW1"
MODEL_KINDS = {"generic": 0, "sae": 1, "aae": 2, "sd": 3, "ad": 4}


class CheckpointError(ValueError):
    pass


def _layer_tensors(layer: LayerSpec):
    out = [(n, layer.params[n].data) for n in sorted(layer.params)]
    out += [(n, layer.buffers[n]) for n in sorted(layer.buffers)]
    return out


def dumps(kind: str, meta: dict, nets: dict[str, list[LayerSpec]]) -> bytes:
    layout = []
    for name, net in nets.items():
        layout.append([name, [
            {
                "kind": l.kind,
                "args": l.args,
                "in_shape": list(l.in_shape) if l.in_shape is not None else None,
                "params": sorted(l.params),
                "buffers": sorted(l.buffers),
            }
            for l in net
        ]])
    header = json.dumps({"meta": meta, "nets": layout}, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<B", MODEL_KINDS[kind]))
    buf.write(struct.pack("<Q", len(header)))
    buf.write(header)
    all_layers = [l for net in nets.values() for l in net]
    buf.write(struct.pack("<Q", len(all_layers)))
    for layer in all_layers:
        tensors = _layer_tensors(layer)
        buf.write(struct.pack("<BQ", KINDS.index(layer.kind), len(tensors)))
        for _, arr in tensors:
            buf.write(struct.pack("<Q", arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(blob: bytes):
    """Returns ``(kind, meta, nets)``."""
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise CheckpointError("not an LPW1 file")
    pos = 4
    (kind_tag,) = struct.unpack_from("<B", view, pos)
    pos += 1
    (hlen,) = struct.unpack_from("<Q", view, pos)
    pos += 8
    header = json.loads(bytes(view[pos : pos + hlen]))
    pos += hlen
    (count,) = struct.unpack_from("<Q", view, pos)
    pos += 8
    kinds = {v: k for k, v in MODEL_KINDS.items()}
    if kind_tag not in kinds:
        raise CheckpointError(f"unknown model kind {kind_tag}")

    nets = {}
    specs = [(name, d) for name, net in header["nets"] for d in net]
    if len(specs) != count:
        raise CheckpointError(f"header lists {len(specs)} layers, payload has {count}")
    for name, d in specs:
        tag, ntens = struct.unpack_from("<BQ", view, pos)
        pos += 9
        if KINDS[tag] != d["kind"]:
            raise CheckpointError(f"layer kind mismatch: {KINDS[tag]} vs {d['kind']}")
        arrays = []
        for _ in range(ntens):
            (rank,) = struct.unpack_from("<Q", view, pos)
            pos += 8
            shape = struct.unpack_from(f"<{rank}Q", view, pos)
            pos += 8 * rank
            n = int(np.prod(shape))
            arr = np.frombuffer(view, dtype="<f4", count=n, offset=pos).reshape(shape)
            pos += 4 * n
            arrays.append(arr.astype(np.float32))
        layer = LayerSpec(d["kind"], d["args"])
        layer.in_shape = tuple(d["in_shape"]) if d["in_shape"] is not None else None
        names = d["params"] + d["buffers"]
        for i, n in enumerate(names):
            if i < len(d["params"]):
                layer.params[n] = Tensor(arrays[i], requires_grad=True)
            else:
                layer.buffers[n] = arrays[i]
        nets.setdefault(name, []).append(layer)
    nets = {name: nets.get(name, []) for name, _ in header["nets"]}
    return kinds[kind_tag], header["meta"], nets


def save(path, kind, meta, nets):
    with open(path, "wb") as f:
        f.write(dumps(kind, meta, nets))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
