"""Graph and mode data model: union expansion, normalisation, block assemblies.

A *mode* is a family of graphs sharing one topology and node set; an
*episode* names which modes act as inputs and which as prediction targets.
Modes in an episode are aligned by expanding every graph to the union of
their node sets in canonical (lexicographically sorted) node-id order, so
row i refers to the same global node in every expanded matrix.  Nodes a
mode does not contain get a self-loop-only adjacency row and zero
attributes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError
from .tensor import Tensor, astensor, concat

Array = np.ndarray


def _frozen_array(values, dtype=np.float64) -> Array:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_adjacency(a: Array, context: str) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{context}: adjacency must be square, got {a.shape}")
    if not np.all((a == 0.0) | (a == 1.0)):
        raise ValidationError(f"{context}: adjacency entries must be 0 or 1")
    if not np.array_equal(a, a.T):
        raise ValidationError(f"{context}: adjacency must be symmetric")
    if not np.all(np.diag(a) == 1.0):
        raise ValidationError(f"{context}: adjacency diagonal must be all ones (self-loops)")


@dataclass(frozen=True, eq=False)
class ModeSpec:
    """Identity of a mode: its id, meta vector, and member node ids."""

    mode_id: str
    meta: Array
    node_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "meta", _frozen_array(self.meta))
        object.__setattr__(self, "node_ids", tuple(self.node_ids))
        if self.meta.ndim != 1:
            raise ValidationError(f"mode {self.mode_id!r}: meta must be a vector")
        if len(set(self.node_ids)) != len(self.node_ids):
            raise ValidationError(f"mode {self.mode_id!r}: duplicate node ids")
        if not self.node_ids:
            raise ValidationError(f"mode {self.mode_id!r}: empty node set")


@dataclass(frozen=True, eq=False)
class ModeGraph:
    """One mode's topology plus its n aligned attribute samples (n, p_j, d)."""

    spec: ModeSpec
    adjacency: Array
    samples: Array

    def __post_init__(self):
        object.__setattr__(self, "adjacency", _frozen_array(self.adjacency))
        object.__setattr__(self, "samples", _frozen_array(self.samples))
        _check_adjacency(self.adjacency, f"mode {self.mode_id!r}")
        p = len(self.spec.node_ids)
        if self.adjacency.shape != (p, p):
            raise ValidationError(
                f"mode {self.mode_id!r}: adjacency shape {self.adjacency.shape} "
                f"does not match {p} node ids"
            )
        if self.samples.ndim != 3 or self.samples.shape[1] != p:
            raise ValidationError(
                f"mode {self.mode_id!r}: samples must have shape (n, {p}, d), "
                f"got {self.samples.shape}"
            )

    @property
    def mode_id(self) -> str:
        return self.spec.mode_id

    @property
    def meta(self) -> Array:
        return self.spec.meta

    @property
    def node_ids(self) -> tuple[str, ...]:
        return self.spec.node_ids

    @property
    def p(self) -> int:
        return len(self.spec.node_ids)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[2]


@dataclass(frozen=True)
class Episode:
    """One transformation task: predict ``targets`` from ``sources``."""

    sources: tuple[str, ...]
    targets: tuple[str, ...]
    phase: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.sources or not self.targets:
            raise ValidationError("episode needs non-empty sources and targets")
        if set(self.sources) & set(self.targets):
            raise ValidationError("episode sources and targets must be disjoint")
        if self.phase not in ("train", "generalize"):
            raise ValidationError(f"unknown episode phase {self.phase!r}")


@dataclass(frozen=True, eq=False)
class ExpandedGraph:
    """A mode embedded in a union node set: padded adjacency, samples, presence."""

    node_ids: tuple[str, ...]
    adjacency: Array
    samples: Array
    presence: Array

    def __post_init__(self):
        object.__setattr__(self, "node_ids", tuple(self.node_ids))
        object.__setattr__(self, "adjacency", _frozen_array(self.adjacency))
        object.__setattr__(self, "samples", _frozen_array(self.samples))
        object.__setattr__(self, "presence", _frozen_array(self.presence, dtype=bool))
        p = len(self.node_ids)
        _check_adjacency(self.adjacency, "expanded graph")
        if self.adjacency.shape != (p, p) or self.presence.shape != (p,):
            raise ValidationError(
                f"expanded graph shapes disagree: {p} nodes, adjacency "
                f"{self.adjacency.shape}, presence {self.presence.shape}"
            )
        if self.samples.ndim != 3 or self.samples.shape[1] != p:
            raise ValidationError(
                f"expanded samples must have shape (n, {p}, d), got {self.samples.shape}"
            )
        absent = ~self.presence
        if np.any(self.adjacency[absent].sum(axis=-1) != 1.0):
            raise ValidationError("absent nodes must carry only their self-loop")
        if np.any(self.samples[:, absent, :] != 0.0):
            raise ValidationError("absent nodes must carry zero attributes")

    @property
    def p(self) -> int:
        return len(self.node_ids)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[2]


def expand_to_union(
    inputs: Sequence[ModeGraph], target: ModeGraph
) -> tuple[list[ExpandedGraph], ExpandedGraph]:
    """Embed every episode mode into the sorted union of their node sets."""
    inputs = list(inputs)
    if not inputs:
        raise ValidationError("expand_to_union needs at least one input mode")
    union: set[str] = set(target.node_ids)
    for mode in inputs:
        union.update(mode.node_ids)
    if not union:
        raise ValidationError("empty node union")
    ordered = tuple(sorted(union))
    index = {v: i for i, v in enumerate(ordered)}

    def expand(mode: ModeGraph) -> ExpandedGraph:
        p_t = len(ordered)
        ix = np.array([index[v] for v in mode.node_ids], dtype=np.intp)
        adj = np.eye(p_t)
        adj[np.ix_(ix, ix)] = mode.adjacency
        samples = np.zeros((mode.n, p_t, mode.d))
        samples[:, ix, :] = mode.samples
        presence = np.zeros(p_t, dtype=bool)
        presence[ix] = True
        return ExpandedGraph(ordered, adj, samples, presence)

    return [expand(m) for m in inputs], expand(target)


def normalize_adjacency(a: Array) -> Array:
    """Symmetric degree normalisation D^(-1/2) A D^(-1/2); supports batches."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    deg = a.sum(axis=-1)
    if np.any(deg <= 0.0):
        raise ValidationError("adjacency row with zero degree (missing self-loop?)")
    inv = 1.0 / np.sqrt(deg)
    return a * inv[..., :, None] * inv[..., None, :]


def assemble_bar_adjacency(a_tilde: Array, p: int) -> Array:
    """Block-diagonal lift of a union adjacency to the full universe size."""
    a_tilde = np.asarray(a_tilde, dtype=np.float64)
    p_tilde = a_tilde.shape[-1]
    if a_tilde.ndim != 2 or a_tilde.shape != (p_tilde, p_tilde):
        raise ShapeError(f"union adjacency must be square, got {a_tilde.shape}")
    if p < p_tilde:
        raise ShapeError(f"universe size {p} smaller than union size {p_tilde}")
    if p == p_tilde:
        return a_tilde.copy()
    out = np.eye(p)
    out[:p_tilde, :p_tilde] = a_tilde
    return out


def assemble_bar_attributes(
    pred_tilde,
    input_attrs: Sequence[Array],
    presence: Sequence[Array],
) -> Tensor:
    """Stack predicted union attributes on top of pooled input attributes.

    Rows [0, p_tilde) come from ``pred_tilde``; each remaining universe row
    is the mean of that node's attribute over the input modes that contain
    it (zero when no input mode covers it).  The pooled block is constant:
    gradient flows only through ``pred_tilde``.
    """
    pred = astensor(pred_tilde)
    attrs = [np.asarray(a, dtype=np.float64) for a in input_attrs]
    masks = [np.asarray(m, dtype=bool) for m in presence]
    if not attrs:
        raise ValidationError("assemble_bar_attributes needs at least one input mode")
    if len(attrs) != len(masks):
        raise ShapeError(f"{len(attrs)} attribute blocks but {len(masks)} presence masks")
    p = attrs[0].shape[-2]
    p_tilde = pred.shape[-2]
    if p < p_tilde:
        raise ShapeError(f"universe size {p} smaller than union size {p_tilde}")
    for a, m in zip(attrs, masks):
        if a.shape[-2] != p:
            raise ShapeError(f"attribute block rows {a.shape} disagree with universe {p}")
        if m.shape != (p,):
            raise ShapeError(f"presence mask shape {m.shape}, expected ({p},)")
    if p == p_tilde:
        return pred
    count = np.zeros(p - p_tilde)
    total = 0.0
    for a, m in zip(attrs, masks):
        tail = m[p_tilde:].astype(np.float64)
        total = total + a[..., p_tilde:, :] * tail[:, None]
        count = count + tail
    pooled = total / np.where(count > 0.0, count, 1.0)[:, None]
    pooled = np.broadcast_to(pooled, pred.shape[:-2] + (p - p_tilde, pred.shape[-1]))
    return concat([pred, astensor(pooled.copy())], axis=-2)


def binarize_edges(probs: Array, tau: float) -> Array:
    """Threshold a probability matrix into a symmetric self-looped adjacency.

    Operates on plain values: gradients never flow through the result.
    Supports batched inputs (..., p, p).
    """
    if isinstance(probs, Tensor):
        probs = probs.data
    probs = np.asarray(probs, dtype=np.float64)
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"edge threshold tau must lie in (0,1), got {tau}")
    if probs.ndim < 2 or probs.shape[-1] != probs.shape[-2]:
        raise ShapeError(f"probability matrix must be square, got {probs.shape}")
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ValidationError("edge probabilities must lie in [0, 1]")
    sym = 0.5 * (probs + np.swapaxes(probs, -1, -2))
    out = (sym >= tau).astype(np.float64)
    idx = np.arange(probs.shape[-1])
    out[..., idx, idx] = 1.0
    return out


def permute_graph(graph: ModeGraph, perm: Sequence[int]) -> ModeGraph:
    """Reorder a mode's storage so new row i holds old row perm[i]."""
    perm = np.asarray(perm, dtype=np.intp)
    p = graph.p
    if sorted(perm.tolist()) != list(range(p)):
        raise ValidationError(f"perm must be a bijection on 0..{p - 1}")
    spec = ModeSpec(
        mode_id=graph.mode_id,
        meta=graph.meta,
        node_ids=tuple(graph.node_ids[j] for j in perm),
    )
    return ModeGraph(
        spec=spec,
        adjacency=graph.adjacency[np.ix_(perm, perm)],
        samples=graph.samples[:, perm, :],
    )
