"""Hypernetworks: MLPs mapping a mode's meta vector to generated layer weights.

A ``WeightSchema`` fixes the flattened layout of every weight block an
encoder or decoder needs.  ``generate_weights`` runs the hypernetwork MLP
on a meta vector, slices the flat output by the schema, and rescales each
matrix block by 1/sqrt(fan_in) so freshly generated layers start near
Glorot scale.  The hypernetwork's own weights are the only trainable
parameters on the encoder/decoder side.

This module also owns the binary weight-archive format used for
checkpoints: a magic tag, a JSON header describing the blocks, then raw
little-endian float64 buffers.  Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError
from .layers import LayerSpec, expected_blocks
from .tensor import Tensor, activate, matmul, reshape, take

Array = np.ndarray

ARCHIVE_MAGIC = b"GXWA"
ARCHIVE_VERSION = 1


@dataclass(frozen=True)
class WeightSchema:
    """Ordered (block_name, shape) layout of one generated weight vector."""

    blocks: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "blocks",
            tuple((str(n), tuple(int(s) for s in shape)) for n, shape in self.blocks),
        )
        names = [n for n, _ in self.blocks]
        if len(set(names)) != len(names):
            raise ValidationError("schema block names must be unique")
        if self.total_size <= 0:
            raise ValidationError("schema must cover at least one weight")

    @property
    def total_size(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.blocks)

    def slices(self) -> list[tuple[str, int, int, tuple[int, ...]]]:
        out = []
        start = 0
        for name, shape in self.blocks:
            stop = start + int(np.prod(shape))
            out.append((name, start, stop, shape))
            start = stop
        return out


def build_schema(specs: Sequence[LayerSpec]) -> WeightSchema:
    """Schema for a layer stack; blocks ordered by layer index then name."""
    specs = list(specs)
    if not specs:
        raise ConfigError("cannot build a schema from zero layers")
    for i in range(len(specs) - 1):
        if specs[i].out_dim != specs[i + 1].in_dim:
            raise ConfigError(
                f"layer dim chain breaks between layer {i} (out {specs[i].out_dim}) "
                f"and layer {i + 1} (in {specs[i + 1].in_dim})"
            )
    blocks = []
    for i, spec in enumerate(specs):
        for name, shape in expected_blocks(spec):
            blocks.append((f"l{i}.{name}", shape))
    return WeightSchema(blocks=tuple(blocks))


@dataclass
class HyperNetParams:
    """One hypernetwork: its MLP weight stack, target schema, and meta width."""

    layers: list[tuple[Tensor, Tensor]]
    schema: WeightSchema
    meta_dim: int

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("hypernetwork needs at least one layer")
        if self.layers[-1][0].shape[-1] != self.schema.total_size:
            raise ShapeError(
                f"hypernetwork output width {self.layers[-1][0].shape[-1]} "
                f"does not match schema size {self.schema.total_size}"
            )

    def parameters(self) -> list[Tensor]:
        return [t for pair in self.layers for t in pair]


def init_hypernet(
    meta_dim: int,
    hidden: int,
    depth: int,
    schema: WeightSchema,
    rng: np.random.Generator,
) -> HyperNetParams:
    """Fresh hypernetwork with N(0, 1/fan_in) weights and zero biases."""
    if meta_dim < 1 or hidden < 1 or depth < 1:
        raise ConfigError(
            f"hypernetwork dims must be positive, got meta_dim={meta_dim} "
            f"hidden={hidden} depth={depth}"
        )
    dims = [meta_dim] + [hidden] * (depth - 1) + [schema.total_size]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = Tensor(rng.normal(size=(fan_in, fan_out)) / np.sqrt(fan_in), requires_grad=True)
        b = Tensor(np.zeros(fan_out), requires_grad=True)
        layers.append((w, b))
    return HyperNetParams(layers=layers, schema=schema, meta_dim=meta_dim)


def _block_scale(shape: tuple[int, ...]) -> float:
    return 1.0 / float(np.sqrt(shape[0])) if len(shape) >= 2 else 1.0


def generate_weights(meta, params: HyperNetParams) -> list[dict[str, Tensor]]:
    """Run the hypernetwork on one meta vector and slice out layer weights.

    Returns one block dict per generated layer, keyed by in-layer block
    name.  Fully differentiable: downstream loss gradients flow through
    the slices into the hypernetwork's own parameters.
    """
    meta = np.asarray(meta, dtype=np.float64)
    if meta.shape != (params.meta_dim,):
        raise ShapeError(
            f"meta vector shape {meta.shape} does not match meta_dim {params.meta_dim}"
        )
    x = Tensor(meta.reshape(1, -1))
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        x = matmul(x, w) + b
        if i < last:
            x = activate(x, "relu")
    flat = reshape(x, (params.schema.total_size,))
    grouped: dict[int, dict[str, Tensor]] = {}
    for name, start, stop, shape in params.schema.slices():
        layer_tag, _, block_name = name.partition(".")
        block = reshape(take(flat, np.arange(start, stop), axis=0), shape)
        scale = _block_scale(shape)
        if scale != 1.0:
            block = block * scale
        grouped.setdefault(int(layer_tag[1:]), {})[block_name] = block
    return [grouped[i] for i in sorted(grouped)]


# ----------------------------------------------------------------------
# weight archives (checkpoint container)
# ----------------------------------------------------------------------

def write_weight_archive(
    path, groups: dict[str, dict[str, Array]], extra: dict
) -> None:
    """Write named float64 arrays plus a JSON metadata map to one file."""
    entries = []
    buffers = []
    for group in sorted(groups):
        for name, arr in groups[group].items():
            arr = np.asarray(arr, dtype=np.float64)
            entries.append({"group": group, "name": name, "shape": list(arr.shape)})
            buffers.append(arr.astype("<f8").tobytes(order="C"))
    header = json.dumps(
        {"format_version": ARCHIVE_VERSION, "extra": extra, "entries": entries},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(ARCHIVE_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for buf in buffers:
            fh.write(buf)


def read_weight_archive(path) -> tuple[dict[str, dict[str, Array]], dict]:
    """Read an archive written by :func:`write_weight_archive`; bit-exact."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(ARCHIVE_MAGIC) + 8 or raw[: len(ARCHIVE_MAGIC)] != ARCHIVE_MAGIC:
        raise ValidationError(f"not a weight archive: {path}")
    offset = len(ARCHIVE_MAGIC)
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    if offset + header_len > len(raw):
        raise ValidationError(f"truncated weight archive header: {path}")
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"corrupt weight archive header: {path}") from exc
    if header.get("format_version") != ARCHIVE_VERSION:
        raise ValidationError(
            f"weight archive version {header.get('format_version')} not supported"
        )
    offset += header_len
    groups: dict[str, dict[str, Array]] = {}
    for entry in header["entries"]:
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape)) * 8
        if offset + nbytes > len(raw):
            raise ValidationError(f"truncated weight archive payload: {path}")
        arr = np.frombuffer(raw, dtype="<f8", count=int(np.prod(shape)), offset=offset)
        groups.setdefault(entry["group"], {})[entry["name"]] = (
            arr.reshape(shape).astype(np.float64)
        )
        offset += nbytes
    if offset != len(raw):
        raise ValidationError(f"trailing bytes in weight archive: {path}")
    return groups, header.get("extra", {})
