"""GNN and MLP layers that take their weights as explicit arguments.

No layer owns parameters: weights arrive as a dict of named Tensor blocks
(usually generated by a hypernetwork, sometimes trained directly).  Every
layer accepts a leading batch axis on the feature matrix and, where the
topology varies per sample, on the adjacency as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError
from .graphs import normalize_adjacency
from .tensor import (
    ACTIVATION_KINDS,
    Tensor,
    activate,
    astensor,
    concat,
    matmul,
    row_softmax,
    transpose,
)

Array = np.ndarray

LAYER_KINDS = ("gcn", "gin", "gat", "mlp")

GAT_NEGATIVE_SLOPE = 0.2


@dataclass(frozen=True)
class LayerSpec:
    """Shape and flavour of one layer; weights live elsewhere."""

    kind: str
    in_dim: int
    out_dim: int
    activation: str = "relu"
    heads: int = 1
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATION_KINDS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ConfigError(
                f"layer dims must be positive, got {self.in_dim}x{self.out_dim}"
            )
        if self.kind == "gat":
            if self.heads < 1:
                raise ConfigError(f"gat needs heads >= 1, got {self.heads}")
            if self.out_dim % self.heads != 0:
                raise ConfigError(
                    f"gat out_dim {self.out_dim} not divisible by heads {self.heads}"
                )


def expected_blocks(spec: LayerSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Named weight blocks (sorted by name) that one layer requires."""
    if spec.kind in ("gcn", "mlp"):
        blocks = [("W", (spec.in_dim, spec.out_dim)), ("b", (spec.out_dim,))]
    elif spec.kind == "gin":
        blocks = [
            ("W1", (spec.in_dim, spec.out_dim)),
            ("b1", (spec.out_dim,)),
            ("W2", (spec.out_dim, spec.out_dim)),
            ("b2", (spec.out_dim,)),
        ]
    else:
        head_dim = spec.out_dim // spec.heads
        blocks = []
        for j in range(spec.heads):
            blocks.append((f"h{j}.W", (spec.in_dim, head_dim)))
            blocks.append((f"h{j}.a1", (head_dim, 1)))
            blocks.append((f"h{j}.a2", (head_dim, 1)))
    return sorted(blocks)


def validate_weights(spec: LayerSpec, weights: dict[str, Tensor]) -> None:
    wanted = dict(expected_blocks(spec))
    if set(weights) != set(wanted):
        raise ValidationError(
            f"{spec.kind} layer expects blocks {sorted(wanted)}, got {sorted(weights)}"
        )
    for name, shape in wanted.items():
        if weights[name].shape != shape:
            raise ShapeError(
                f"block {name!r} has shape {weights[name].shape}, expected {shape}"
            )


def init_layer_weights(spec: LayerSpec, rng: np.random.Generator) -> dict[str, Tensor]:
    """Directly trainable blocks, N(0, 1/fan_in) weights and zero biases."""
    out: dict[str, Tensor] = {}
    for name, shape in expected_blocks(spec):
        if len(shape) >= 2:
            values = rng.normal(size=shape) / np.sqrt(shape[0])
        else:
            values = np.zeros(shape)
        out[name] = Tensor(values, requires_grad=True)
    return out


def _check_feature_dim(h: Tensor, spec: LayerSpec) -> None:
    if h.shape[-1] != spec.in_dim:
        raise ShapeError(
            f"{spec.kind} layer expects {spec.in_dim} input features, "
            f"got feature matrix of shape {h.shape}"
        )


def gcn_layer(a_norm: Array, h, weights: dict[str, Tensor], spec: LayerSpec) -> Tensor:
    """act(A_norm . H . W + b) with a pre-normalised adjacency."""
    h = astensor(h)
    _check_feature_dim(h, spec)
    out = matmul(matmul(astensor(a_norm), h), weights["W"]) + weights["b"]
    return activate(out, spec.activation)


def gin_layer(a: Array, h, weights: dict[str, Tensor], spec: LayerSpec) -> Tensor:
    """MLP2((1 + eps) . H + (A - I) . H); the stored A includes self-loops."""
    h = astensor(h)
    _check_feature_dim(h, spec)
    a = np.asarray(a, dtype=np.float64)
    neighbours = a - np.eye(a.shape[-1])
    combined = h * (1.0 + spec.eps) + matmul(astensor(neighbours), h)
    hidden = activate(matmul(combined, weights["W1"]) + weights["b1"], spec.activation)
    return matmul(hidden, weights["W2"]) + weights["b2"]


def gat_layer(a: Array, h, weights: dict[str, Tensor], spec: LayerSpec) -> Tensor:
    """Multi-head attention over graph neighbourhoods, heads concatenated."""
    h = astensor(h)
    _check_feature_dim(h, spec)
    a = np.asarray(a, dtype=np.float64)
    mask = (a > 0.0).astype(np.float64)
    head_outputs = []
    for j in range(spec.heads):
        hw = matmul(h, weights[f"h{j}.W"])
        s1 = matmul(hw, weights[f"h{j}.a1"])
        s2 = matmul(hw, weights[f"h{j}.a2"])
        scores = activate(s1 + transpose(s2), "leaky_relu", GAT_NEGATIVE_SLOPE)
        alpha = row_softmax(scores, mask)
        head_outputs.append(matmul(alpha, hw))
    joined = head_outputs[0] if spec.heads == 1 else concat(head_outputs, axis=-1)
    return activate(joined, spec.activation)


def mlp_layer(h, weights: dict[str, Tensor], spec: LayerSpec) -> Tensor:
    h = astensor(h)
    _check_feature_dim(h, spec)
    return activate(matmul(h, weights["W"]) + weights["b"], spec.activation)


def mlp_forward(
    h, specs: Sequence[LayerSpec], weights: Sequence[dict[str, Tensor]]
) -> Tensor:
    """Chain of affine+activation layers; dims must link up."""
    h = astensor(h)
    if len(specs) != len(weights):
        raise ShapeError(f"{len(specs)} layer specs but {len(weights)} weight sets")
    for spec, w in zip(specs, weights):
        if spec.kind != "mlp":
            raise ConfigError(f"mlp_forward got a {spec.kind!r} layer")
        h = mlp_layer(h, w, spec)
    return h


def gnn_forward(
    a: Array, h, specs: Sequence[LayerSpec], weights: Sequence[dict[str, Tensor]]
) -> Tensor:
    """Run a mixed stack of graph and mlp layers over one adjacency.

    The adjacency is the raw binary matrix (batch axis allowed); the
    GCN-normalised form is computed once and shared by all gcn layers.
    """
    h = astensor(h)
    if len(specs) != len(weights):
        raise ShapeError(f"{len(specs)} layer specs but {len(weights)} weight sets")
    a = np.asarray(a, dtype=np.float64)
    a_norm: Array | None = None
    for spec, w in zip(specs, weights):
        if spec.kind == "gcn":
            if a_norm is None:
                a_norm = normalize_adjacency(a)
            h = gcn_layer(a_norm, h, w, spec)
        elif spec.kind == "gin":
            h = gin_layer(a, h, w, spec)
        elif spec.kind == "gat":
            h = gat_layer(a, h, w, spec)
        else:
            h = mlp_layer(h, w, spec)
    return h
