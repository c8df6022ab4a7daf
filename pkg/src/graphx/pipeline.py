"""End-to-end model: encode inputs, pool, decode targets, predict topology.

The model holds two hypernetworks (one generating encoder weights, one
generating decoder weights, both driven by mode descriptor vectors) plus a
shared link-prediction GNN trained directly. A forward pass over an episode:

1. encode each input mode on its expanded graph with generated weights,
2. pool the per-node embeddings across input modes,
3. decode the pooled embedding on the target graph with generated weights,
4. score all node pairs with the link predictor (trained against the target
   adjacency),
5. extend the target adjacency to the full universe by thresholding link
   scores over assembled full-universe attributes,
6. decode once more on the extended graph to fill in nodes outside the
   episode's union.

Only steps 1-4 and 6 carry gradients; the thresholding in step 5 is a hard
decision and is computed outside the tape.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError, DivergenceError, ShapeError, ValidationError
from .graphs import (
    Episode,
    ExpandedGraph,
    assemble_bar_adjacency,
    assemble_bar_attributes,
    binarize_edges,
    expand_to_union,
)
from .hypernet import (
    HyperNetParams,
    build_schema,
    generate_weights,
    init_hypernet,
    read_weight_archive,
    write_weight_archive,
)
from .layers import LAYER_KINDS, LayerSpec, gnn_forward, init_layer_weights
from .report import canonical_hash
from .tensor import (
    Adam,
    Tensor,
    astensor,
    bce_loss,
    concat,
    mae_loss,
    matmul,
    maximum,
    mse_loss,
    sigmoid,
    take,
    transpose,
)

logger = logging.getLogger("graphx.pipeline")

Array = np.ndarray

ABLATIONS = ("full", "hypergnn", "hypergnn_1", "hypergnn_2", "single_input_eval")
POOLING_KINDS = ("mean", "sum", "max")
LOSS_KINDS = ("mse", "mae")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and loss knobs; layer specs are derived, not stored."""

    meta_dim: int
    d: int = 1
    gnn_kind: str = "gcn"
    gnn_hidden: int = 32
    latent_dim: int = 8
    mlp_hidden: int = 16
    heads: int = 4
    gin_eps: float = 0.0
    activation: str = "relu"
    hyper_hidden: int = 64
    hyper_depth: int = 3
    link_hidden: int = 16
    link_dim: int = 8
    pooling: str = "mean"
    rho: float = 1.0
    tau: float = 0.5
    loss_kind: str = "mse"
    ablation: str = "full"
    meta_type_dims: int = 2

    def __post_init__(self):
        if self.meta_dim < 1 or self.d < 1:
            raise ConfigError("meta_dim and d must be positive")
        if self.gnn_kind not in ("gcn", "gin", "gat"):
            raise ConfigError(f"unknown gnn kind {self.gnn_kind!r}")
        if self.pooling not in POOLING_KINDS:
            raise ConfigError(f"unknown pooling {self.pooling!r}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}")
        if self.rho < 0:
            raise ConfigError("rho must be >= 0")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie strictly between 0 and 1")
        if self.ablation == "hypergnn_2" and not 0 < self.meta_type_dims <= self.meta_dim:
            raise ConfigError("meta_type_dims must lie in (0, meta_dim]")
        # Building every spec list validates dims (e.g. head divisibility).
        self.encoder_specs()
        self.decoder_specs()
        self.linkpred_specs()

    def _gnn(self, in_dim: int, out_dim: int, activation: str) -> LayerSpec:
        return LayerSpec(
            kind=self.gnn_kind,
            in_dim=in_dim,
            out_dim=out_dim,
            activation=activation,
            heads=self.heads if self.gnn_kind == "gat" else 1,
            eps=self.gin_eps,
        )

    def encoder_specs(self) -> list[LayerSpec]:
        return [
            self._gnn(self.d, self.gnn_hidden, self.activation),
            self._gnn(self.gnn_hidden, self.latent_dim, "identity"),
        ]

    def decoder_gnn_specs(self) -> list[LayerSpec]:
        return [
            self._gnn(self.latent_dim, self.gnn_hidden, self.activation),
            self._gnn(self.gnn_hidden, self.gnn_hidden, self.activation),
        ]

    def decoder_head_specs(self) -> list[LayerSpec]:
        return [
            LayerSpec("mlp", self.gnn_hidden, self.mlp_hidden, self.activation),
            LayerSpec("mlp", self.mlp_hidden, self.d, "identity"),
        ]

    def decoder_specs(self) -> list[LayerSpec]:
        return self.decoder_gnn_specs() + self.decoder_head_specs()

    def generated_decoder_specs(self) -> list[LayerSpec]:
        """Specs whose weights come from the decoder hypernetwork.

        Under the shared-head ablation the readout MLP is a single trained
        module, so the hypernetwork only generates the decoder GNN part.
        """
        if self.ablation == "hypergnn_1":
            return self.decoder_gnn_specs()
        return self.decoder_specs()

    def linkpred_specs(self) -> list[LayerSpec]:
        return [
            self._gnn(self.d, self.link_hidden, self.activation),
            self._gnn(self.link_hidden, self.link_dim, "identity"),
        ]

    def to_mapping(self) -> dict:
        return {
            "meta_dim": self.meta_dim,
            "d": self.d,
            "gnn_kind": self.gnn_kind,
            "gnn_hidden": self.gnn_hidden,
            "latent_dim": self.latent_dim,
            "mlp_hidden": self.mlp_hidden,
            "heads": self.heads,
            "gin_eps": self.gin_eps,
            "activation": self.activation,
            "hyper_hidden": self.hyper_hidden,
            "hyper_depth": self.hyper_depth,
            "link_hidden": self.link_hidden,
            "link_dim": self.link_dim,
            "pooling": self.pooling,
            "rho": self.rho,
            "tau": self.tau,
            "loss_kind": self.loss_kind,
            "ablation": self.ablation,
            "meta_type_dims": self.meta_type_dims,
        }

    @staticmethod
    def from_mapping(mapping: dict) -> "ModelConfig":
        known = {f.name for f in ModelConfig.__dataclass_fields__.values()}
        extra = set(mapping) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return ModelConfig(**mapping)


def config_hash(config: ModelConfig) -> str:
    return canonical_hash(config.to_mapping())


class Model:
    """Parameter container: two hypernetworks, link GNN, optional shared head."""

    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        enc_schema = build_schema(config.encoder_specs())
        dec_schema = build_schema(config.generated_decoder_specs())
        self.hyper_e = init_hypernet(
            config.meta_dim, config.hyper_hidden, config.hyper_depth, enc_schema, rng
        )
        self.hyper_d = init_hypernet(
            config.meta_dim, config.hyper_hidden, config.hyper_depth, dec_schema, rng
        )
        self.phi = [init_layer_weights(s, rng) for s in config.linkpred_specs()]
        if config.ablation == "hypergnn_1":
            self.head = [init_layer_weights(s, rng) for s in config.decoder_head_specs()]
        else:
            self.head = None

    def registry(self) -> dict[str, Tensor]:
        """Stable name -> tensor map; iteration order is the update order."""
        named: dict[str, Tensor] = {}
        for prefix, net in (("gamma_e", self.hyper_e), ("gamma_d", self.hyper_d)):
            for i, (w, b) in enumerate(net.layers):
                named[f"{prefix}.l{i}.W"] = w
                named[f"{prefix}.l{i}.b"] = b
        for i, blocks in enumerate(self.phi):
            for name in sorted(blocks):
                named[f"phi.l{i}.{name}"] = blocks[name]
        if self.head is not None:
            for i, blocks in enumerate(self.head):
                for name in sorted(blocks):
                    named[f"head.l{i}.{name}"] = blocks[name]
        return named

    def parameters(self) -> list[Tensor]:
        return list(self.registry().values())

    def trainable_parameters(self) -> list[Tensor]:
        if self.config.ablation == "hypergnn":
            reg = self.registry()
            return [t for name, t in reg.items() if name.startswith("gamma_d.")]
        return self.parameters()

    def effective_meta(self, meta: Array) -> Array:
        """Descriptor actually fed to the hypernetworks.

        The masked-descriptor ablation keeps only the leading mode-type slots
        and zeroes the rest, removing mode-specific information.
        """
        meta = np.asarray(meta, dtype=np.float64)
        if self.config.ablation == "hypergnn_2":
            masked = np.zeros_like(meta)
            k = self.config.meta_type_dims
            masked[:k] = meta[:k]
            return masked
        return meta


def trainable_param_count(config: ModelConfig) -> int:
    """Number of trained scalars; independent of how many modes exist."""
    model = Model(config, seed=0)
    return sum(int(np.prod(t.shape)) for t in model.trainable_parameters())


# ---------------------------------------------------------------------------
# Episode preparation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreparedTarget:
    """Everything needed to run one target of an episode, precomputed."""

    target_id: str
    source_ids: tuple[str, ...]
    union_ids: tuple[str, ...]
    bar_ids: tuple[str, ...]
    inputs: tuple[ExpandedGraph, ...]
    target: ExpandedGraph
    a_bar: Array
    input_bar_attrs: tuple[Array, ...]
    input_bar_presence: tuple[Array, ...]
    truth_rows: Array
    truth: Array
    meta_inputs: tuple[Array, ...]
    meta_target: Array

    @property
    def p_tilde(self) -> int:
        return len(self.union_ids)

    @property
    def p(self) -> int:
        return len(self.bar_ids)


def prepare_episode(
    dataset: Dataset,
    episode: Episode,
    meta_override: dict[str, Array] | None = None,
) -> list[PreparedTarget]:
    """Expand graphs and cache assembly inputs for each target of an episode."""
    override = meta_override or {}
    for key in override:
        dataset.mode(key)  # unknown ids fail loudly
    sources = [dataset.mode(s) for s in episode.sources]
    prepared = []
    for target_id in episode.targets:
        target_mode = dataset.mode(target_id)
        inputs_exp, target_exp = expand_to_union(sources, target_mode)
        union_ids = target_exp.node_ids
        union_set = set(union_ids)
        remaining = tuple(sorted(v for v in dataset.universe if v not in union_set))
        bar_ids = union_ids + remaining
        p_tilde = len(union_ids)
        p = len(bar_ids)
        a_bar = assemble_bar_adjacency(target_exp.adjacency, p)
        bar_attrs = []
        bar_presence = []
        n = dataset.n
        d = dataset.d
        for exp in inputs_exp:
            attrs = np.concatenate(
                [exp.samples, np.zeros((n, p - p_tilde, d))], axis=1
            )
            pres = np.concatenate([exp.presence, np.zeros(p - p_tilde, dtype=bool)])
            bar_attrs.append(attrs)
            bar_presence.append(pres)
        truth_rows = np.flatnonzero(target_exp.presence)
        truth = target_exp.samples[:, truth_rows, :]

        def _meta(mode_id: str, stored: Array) -> Array:
            if mode_id in override:
                got = np.asarray(override[mode_id], dtype=np.float64)
                if got.shape != stored.shape:
                    raise ShapeError(
                        f"meta override for {mode_id!r} has shape {got.shape}, "
                        f"expected {stored.shape}"
                    )
                return got
            return stored

        prepared.append(
            PreparedTarget(
                target_id=target_id,
                source_ids=tuple(episode.sources),
                union_ids=union_ids,
                bar_ids=bar_ids,
                inputs=tuple(inputs_exp),
                target=target_exp,
                a_bar=a_bar,
                input_bar_attrs=tuple(bar_attrs),
                input_bar_presence=tuple(bar_presence),
                truth_rows=truth_rows,
                truth=truth,
                meta_inputs=tuple(
                    _meta(s, dataset.mode(s).meta) for s in episode.sources
                ),
                meta_target=_meta(target_id, target_mode.meta),
            )
        )
    return prepared


# ---------------------------------------------------------------------------
# Pipeline ops
# ---------------------------------------------------------------------------


def encode_mode(
    adjacency: Array, attrs, specs: Sequence[LayerSpec], weights
) -> Tensor:
    """Per-node embeddings of one input mode under generated encoder weights."""
    return gnn_forward(adjacency, astensor(attrs), specs, weights)


def pool_embeddings(embeddings: Sequence[Tensor], kind: str = "mean") -> Tensor:
    """Combine per-input-mode embeddings row-wise into one matrix."""
    if len(embeddings) == 0:
        raise ValidationError("pooling needs at least one embedding")
    first_shape = embeddings[0].shape
    for z in embeddings[1:]:
        if z.shape != first_shape:
            raise ShapeError(
                f"pooled embeddings disagree in shape: {first_shape} vs {z.shape}"
            )
    if kind == "mean":
        out = embeddings[0]
        for z in embeddings[1:]:
            out = out + z
        return out * (1.0 / len(embeddings))
    if kind == "sum":
        out = embeddings[0]
        for z in embeddings[1:]:
            out = out + z
        return out
    if kind == "max":
        out = embeddings[0]
        for z in embeddings[1:]:
            out = maximum(out, z)
        return out
    raise ConfigError(f"unknown pooling {kind!r}")


def _lift_width(h: Tensor, width: int) -> Tensor:
    """Zero-pad the trailing axis up to ``width`` (no-op when already there)."""
    current = h.shape[-1]
    if current == width:
        return h
    if current > width:
        raise ShapeError(f"cannot lift width {current} down to {width}")
    pad = np.zeros(h.shape[:-1] + (width - current,))
    return concat([h, Tensor(pad)], axis=-1)


def decode_mode(
    adjacency: Array, pooled, specs: Sequence[LayerSpec], weights
) -> Tensor:
    """Predict target attributes from pooled embeddings on the target graph.

    Accepts inputs narrower than the decoder's input width (e.g. raw d-wide
    attributes) by zero-padding the trailing axis first.
    """
    h = _lift_width(astensor(pooled), specs[0].in_dim)
    return gnn_forward(adjacency, h, specs, weights)


def link_scores(
    adjacency: Array, attrs, specs: Sequence[LayerSpec], weights
) -> Tensor:
    """Symmetric edge probabilities sigmoid(H H^T) from a GNN embedding."""
    h = gnn_forward(adjacency, astensor(attrs), specs, weights)
    scores = matmul(h, transpose(h))
    return sigmoid(scores)


def link_loss(probs: Tensor, adjacency: Array, mask: Array | None = None) -> Tensor:
    """Binary cross-entropy of predicted edge probabilities vs. the adjacency."""
    return bce_loss(probs, astensor(adjacency), mask=mask)


def update_topology(
    a_bar: Array,
    x_bar: Tensor,
    specs: Sequence[LayerSpec],
    weights,
    tau: float,
) -> Array:
    """Threshold link scores on the assembled full-universe graph.

    Runs outside the tape: the output is a hard binary adjacency, so no
    gradient flows through this step by construction.
    """
    detached_weights = [
        {name: Tensor(t.data) for name, t in blocks.items()} for blocks in weights
    ]
    probs = link_scores(a_bar, x_bar.detach(), specs, detached_weights)
    return binarize_edges(probs.data, tau)


def predict_remaining(
    a_new: Array,
    x_bar: Tensor,
    specs: Sequence[LayerSpec],
    weights,
    p_tilde: int,
) -> Tensor:
    """Decode on the updated graph and keep rows outside the episode union."""
    p = x_bar.shape[-2]
    if not 0 <= p_tilde <= p:
        raise ShapeError(f"p_tilde {p_tilde} outside [0, {p}]")
    if p_tilde == p:
        empty = np.zeros(x_bar.shape[:-2] + (0, specs[-1].out_dim))
        return Tensor(empty)
    full = decode_mode(a_new, x_bar, specs, weights)
    rows = np.arange(p_tilde, p)
    return take(full, rows, axis=-2)


# ---------------------------------------------------------------------------
# Forward pass and losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    """Detached outputs for one target of one episode."""

    target_id: str
    node_ids: tuple[str, ...]
    p_tilde: int
    x_hat: Array
    link_probs: Array
    a_updated: Array
    truth_rows: Array
    truth: Array
    pred_at_truth: Array


def _decoder_weights(model: Model, meta_target: Array):
    """Full decoder weight list (generated blocks plus shared head if any)."""
    generated = generate_weights(
        model.effective_meta(meta_target), model.hyper_d
    )
    if model.head is not None:
        return generated + model.head
    return generated


def forward_target(
    model: Model, prep: PreparedTarget
) -> tuple[Prediction, Tensor, Tensor]:
    """Run the pipeline for one prepared target.

    Returns the detached prediction, the attribute loss at known-truth rows,
    and the link loss against the target adjacency.
    """
    cfg = model.config
    enc_specs = cfg.encoder_specs()
    dec_specs = cfg.decoder_specs()
    link_specs = cfg.linkpred_specs()

    zs = []
    for exp, meta in zip(prep.inputs, prep.meta_inputs):
        enc_w = generate_weights(model.effective_meta(meta), model.hyper_e)
        zs.append(encode_mode(exp.adjacency, exp.samples, enc_specs, enc_w))
    pooled = pool_embeddings(zs, cfg.pooling)

    dec_w = _decoder_weights(model, prep.meta_target)
    x_tilde = decode_mode(prep.target.adjacency, pooled, dec_specs, dec_w)

    probs = link_scores(prep.target.adjacency, x_tilde, link_specs, model.phi)
    l2_k = link_loss(probs, prep.target.adjacency)

    x_bar = assemble_bar_attributes(
        x_tilde, prep.input_bar_attrs, prep.input_bar_presence
    )
    a_new = update_topology(prep.a_bar, x_bar, link_specs, model.phi, cfg.tau)
    x_rest = predict_remaining(a_new, x_bar, dec_specs, dec_w, prep.p_tilde)
    x_hat = concat([x_tilde, x_rest], axis=-2) if x_rest.shape[-2] else x_tilde

    pred_rows = take(x_hat, prep.truth_rows, axis=-2)
    loss_fn = mse_loss if cfg.loss_kind == "mse" else mae_loss
    l1_k = loss_fn(pred_rows, Tensor(prep.truth))

    prediction = Prediction(
        target_id=prep.target_id,
        node_ids=prep.bar_ids,
        p_tilde=prep.p_tilde,
        x_hat=x_hat.data.copy(),
        link_probs=probs.data.copy(),
        a_updated=a_new,
        truth_rows=prep.truth_rows,
        truth=prep.truth,
        pred_at_truth=pred_rows.data.copy(),
    )
    return prediction, l1_k, l2_k


@dataclass(frozen=True)
class LossReport:
    attribute_loss: float
    link_loss: float
    total: float


def episode_losses(
    model: Model, prepared: Sequence[PreparedTarget]
) -> tuple[Tensor, LossReport, dict[str, Prediction]]:
    """Total loss over one episode's targets plus detached predictions.

    The attribute term averages over targets; the link term sums over them.
    The total is attribute + rho * link; with rho = 0 the link term is kept
    out of the graph entirely so the link predictor receives no gradient.
    """
    if len(prepared) == 0:
        raise ValidationError("episode has no prepared targets")
    preds: dict[str, Prediction] = {}
    l1_terms = []
    l2_terms = []
    for prep in prepared:
        pred, l1_k, l2_k = forward_target(model, prep)
        preds[prep.target_id] = pred
        l1_terms.append(l1_k)
        l2_terms.append(l2_k)
    l1 = l1_terms[0]
    for t in l1_terms[1:]:
        l1 = l1 + t
    l1 = l1 * (1.0 / len(l1_terms))
    l2 = l2_terms[0]
    for t in l2_terms[1:]:
        l2 = l2 + t
    total = l1 if model.config.rho == 0.0 else l1 + l2 * model.config.rho
    report = LossReport(
        attribute_loss=float(l1.data),
        link_loss=float(l2.data),
        total=float(total.data),
    )
    return total, report, preds


def _effective_episode(model: Model, episode: Episode, training: bool) -> Episode:
    """Apply evaluation-time source truncation for the single-input ablation."""
    if (
        not training
        and model.config.ablation == "single_input_eval"
        and len(episode.sources) > 1
    ):
        return replace(episode, sources=episode.sources[:1])
    return episode


def forward_episode(
    model: Model,
    dataset: Dataset,
    episode: Episode,
    meta_override: dict[str, Array] | None = None,
    training: bool = True,
) -> tuple[LossReport, dict[str, Prediction]]:
    episode = _effective_episode(model, episode, training)
    prepared = prepare_episode(dataset, episode, meta_override)
    _, report, preds = episode_losses(model, prepared)
    return report, preds


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistoryEntry:
    step: int
    attribute_loss: float
    link_loss: float
    total: float


@dataclass
class TrainResult:
    model: Model
    history: list[HistoryEntry]
    converged: bool
    steps_run: int

    @property
    def final(self) -> HistoryEntry:
        return self.history[-1]


def train_model(
    model: Model,
    dataset: Dataset,
    episodes: Sequence[Episode],
    learning_rate: float = 1e-3,
    max_steps: int = 2000,
    tol: float = 1e-6,
    window: int = 50,
) -> TrainResult:
    """Adam on the trainable parameters until relative loss change stalls.

    Convergence: after at least ``window`` steps, stop when the total loss
    changed by less than ``tol`` (relative) across the last window.
    """
    if len(episodes) == 0:
        raise ValidationError("training needs at least one episode")
    if model.config.ablation == "hypergnn":
        for ep in episodes:
            if len(ep.sources) != 1:
                raise ConfigError(
                    "the decoder-only ablation expects single-input episodes"
                )
    prepared = [prepare_episode(dataset, ep) for ep in episodes]
    params = model.trainable_parameters()
    opt = Adam(params, learning_rate=learning_rate)
    history: list[HistoryEntry] = []
    converged = False
    steps_run = 0
    for step in range(max_steps):
        reports = []
        totals = []
        for preps in prepared:
            try:
                total_k, report_k, _ = episode_losses(model, preps)
            except ValidationError as exc:
                raise DivergenceError(
                    f"non-finite loss at step {step}: {exc}"
                ) from exc
            totals.append(total_k)
            reports.append(report_k)
        total = totals[0]
        for t in totals[1:]:
            total = total + t
        total = total * (1.0 / len(totals))
        if not np.isfinite(total.data):
            raise DivergenceError(f"non-finite loss at step {step}")
        opt.zero_grad()
        total.backward()
        opt.step()
        steps_run = step + 1
        entry = HistoryEntry(
            step=step,
            attribute_loss=float(np.mean([r.attribute_loss for r in reports])),
            link_loss=float(np.mean([r.link_loss for r in reports])),
            total=float(total.data),
        )
        history.append(entry)
        if step % 100 == 0:
            logger.debug(
                "step %d total %.6g attr %.6g link %.6g",
                step,
                entry.total,
                entry.attribute_loss,
                entry.link_loss,
            )
        if len(history) > window:
            old = history[-(window + 1)].total
            new = entry.total
            if abs(old - new) <= tol * max(abs(old), 1e-12):
                converged = True
                break
    return TrainResult(model=model, history=history, converged=converged, steps_run=steps_run)


def train(
    dataset: Dataset,
    episodes: Sequence[Episode],
    config: ModelConfig,
    seed: int,
    learning_rate: float = 1e-3,
    max_steps: int = 2000,
    tol: float = 1e-6,
    window: int = 50,
) -> TrainResult:
    model = Model(config, seed)
    return train_model(
        model,
        dataset,
        episodes,
        learning_rate=learning_rate,
        max_steps=max_steps,
        tol=tol,
        window=window,
    )


# ---------------------------------------------------------------------------
# Evaluation / generalization
# ---------------------------------------------------------------------------


def evaluate(
    model: Model,
    dataset: Dataset,
    episode: Episode,
    meta_override: dict[str, Array] | None = None,
):
    """Frozen-parameter forward pass plus metrics at known-truth rows."""
    from .metrics import build_metric_report

    report, preds = forward_episode(
        model, dataset, episode, meta_override=meta_override, training=False
    )
    blocks = {
        tid: (pred.pred_at_truth, pred.truth) for tid, pred in preds.items()
    }
    metrics = build_metric_report(blocks)
    return metrics, report, preds


def generalize(
    model: Model,
    dataset: Dataset,
    episode: Episode,
    meta_override: dict[str, Array] | None = None,
):
    """Evaluate on an episode whose targets were never trained on.

    Identical computation to ``evaluate``; the split is the caller's contract.
    """
    return evaluate(model, dataset, episode, meta_override=meta_override)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def save_checkpoint(model: Model, path) -> None:
    groups: dict[str, dict[str, Array]] = {"gamma_e": {}, "gamma_d": {}, "phi": {}}
    if model.head is not None:
        groups["head"] = {}
    for name, tensor in model.registry().items():
        group, rest = name.split(".", 1)
        groups[group][rest] = tensor.data
    extra = {
        "config": model.config.to_mapping(),
        "config_hash": config_hash(model.config),
        "seed": model.seed,
    }
    write_weight_archive(path, groups, extra)


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> Model:
    groups, extra = read_weight_archive(path)
    config = ModelConfig.from_mapping(extra["config"])
    stored_hash = extra.get("config_hash")
    if stored_hash != config_hash(config):
        raise ConfigError("checkpoint config hash does not match its stored config")
    if expected_config is not None and config_hash(expected_config) != stored_hash:
        raise ConfigError(
            "checkpoint was produced under a different config "
            f"(stored {stored_hash}, requested {config_hash(expected_config)})"
        )
    model = Model(config, seed=int(extra.get("seed", 0)))
    registry = model.registry()
    stored = {
        f"{group}.{rest}": arr
        for group, blocks in groups.items()
        for rest, arr in blocks.items()
    }
    if set(stored) != set(registry):
        missing = sorted(set(registry) - set(stored))
        surplus = sorted(set(stored) - set(registry))
        raise ValidationError(
            f"checkpoint parameter names mismatch: missing {missing}, surplus {surplus}"
        )
    for name, tensor in registry.items():
        arr = stored[name]
        if arr.shape != tensor.shape:
            raise ShapeError(
                f"checkpoint block {name} has shape {arr.shape}, expected {tensor.shape}"
            )
        tensor.data = arr.astype(np.float64)
    return model
