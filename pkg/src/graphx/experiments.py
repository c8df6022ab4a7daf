"""Reusable experiment runners behind the CLI subcommands.

Each runner is deterministic per seed and returns a small report dataclass
with a ``to_mapping`` method for JSON emission:

* ``run_theorem1``: trains on a synthetic family where the mode descriptor
  determines the transformation, then compares generalization error on an
  unseen mode under its true descriptor vs. descriptors substituted from the
  training modes.
* ``run_link_experiment``: trains the graph-autoencoder link predictor alone
  with part of the supervision masked, reporting held-out ranking AUC.
* ``run_meta_ablation``: trains the full model and the masked-descriptor
  ablation on the same data and compares held-out MSE.
* ``run_gradcheck``: finite-difference audit per layer kind, for hypernetwork
  weight generation, and for the end-to-end episode loss.
* ``run_paramaudit``: shows the trainable parameter count does not grow with
  the number of modes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import (
    SyntheticConfig,
    SyntheticMode,
    gen_synthetic,
    latent_factor_adjacency,
    random_symmetric_adjacency,
)
from .errors import DivergenceError, ValidationError
from .graphs import Episode
from .hypernet import build_schema, generate_weights, init_hypernet
from .layers import LAYER_KINDS, LayerSpec, gnn_forward, init_layer_weights
from .metrics import auc_metric
from .pipeline import (
    Model,
    ModelConfig,
    episode_losses,
    generalize,
    link_loss,
    link_scores,
    prepare_episode,
    train,
    trainable_param_count,
)
from .tensor import Adam, Tensor, grad_check, tsum

logger = logging.getLogger("graphx.experiments")

Array = np.ndarray


# ---------------------------------------------------------------------------
# Descriptor-sensitivity experiment
# ---------------------------------------------------------------------------


def default_experiment_config(**over) -> ModelConfig:
    base = dict(
        meta_dim=4,
        d=1,
        gnn_hidden=16,
        latent_dim=8,
        mlp_hidden=8,
        hyper_hidden=24,
        hyper_depth=2,
        link_hidden=8,
        link_dim=4,
    )
    base.update(over)
    return ModelConfig(**base)


def descriptor_family(
    seed: int,
    p: int = 10,
    n: int = 24,
    noise_std: float = 0.1,
    density: float = 0.2,
    input_fraction: float = 0.8,
    target_fraction: float = 0.6,
):
    """Synthetic family whose descriptor fully determines the transformation.

    Three training targets span a spread of (scale, shift) pairs; the unseen
    target's pair is a convex combination of the two extremes, so its true
    descriptor carries exactly the information needed to generalize.
    """
    rng = np.random.default_rng(seed)
    scales = np.array([0.6, 1.1, 1.6]) + rng.uniform(-0.05, 0.05, size=3)
    shifts = np.array([-0.6, 0.0, 0.6]) + rng.uniform(-0.05, 0.05, size=3)
    lam = rng.uniform(0.35, 0.65)
    unseen_scale = lam * scales[0] + (1 - lam) * scales[2]
    unseen_shift = lam * shifts[0] + (1 - lam) * shifts[2]
    modes = [
        SyntheticMode("in0", "input", input_fraction, density),
        SyntheticMode("in1", "input", input_fraction, density),
    ]
    train_targets = []
    for k in range(3):
        tid = f"t{k}"
        train_targets.append(tid)
        modes.append(
            SyntheticMode(
                tid, "target", target_fraction, density,
                scale=float(scales[k]), shift=float(shifts[k]),
            )
        )
    modes.append(
        SyntheticMode(
            "unseen", "target", target_fraction, density,
            scale=float(unseen_scale), shift=float(unseen_shift),
        )
    )
    cfg = SyntheticConfig(p=p, n=n, d=1, noise_std=noise_std, modes=tuple(modes))
    dataset, truth = gen_synthetic(cfg, seed=seed)
    train_episode = Episode(("in0", "in1"), tuple(train_targets), phase="train")
    unseen_episode = Episode(("in0", "in1"), ("unseen",), phase="generalize")
    return dataset, train_episode, unseen_episode, truth


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    diverged: bool
    converged: bool
    true_error: float
    substituted_errors: tuple[float, ...]
    permuted_error: float

    @property
    def win(self) -> bool:
        return not self.diverged and self.true_error <= self.permuted_error

    def to_mapping(self) -> dict:
        return {
            "trial": self.trial,
            "seed": self.seed,
            "diverged": self.diverged,
            "converged": self.converged,
            "true_error": self.true_error,
            "substituted_errors": list(self.substituted_errors),
            "permuted_error": self.permuted_error,
            "win": self.win,
        }


@dataclass(frozen=True)
class Theorem1Report:
    trials: tuple[TrialResult, ...]
    wins: int
    valid_trials: int
    excluded: int
    pooled_true: float
    pooled_permuted: float

    @property
    def passed(self) -> bool:
        return (
            self.valid_trials > 0
            and self.wins >= int(np.ceil(0.8 * self.valid_trials))
            and self.pooled_true < self.pooled_permuted
        )

    def to_mapping(self) -> dict:
        return {
            "trials": [t.to_mapping() for t in self.trials],
            "wins": self.wins,
            "valid_trials": self.valid_trials,
            "excluded": self.excluded,
            "pooled_true_error": self.pooled_true,
            "pooled_permuted_error": self.pooled_permuted,
            "passed": self.passed,
        }


def run_theorem1_trial(
    trial: int,
    seed: int,
    config: ModelConfig | None = None,
    steps: int = 400,
    learning_rate: float = 5e-3,
    noise_std: float = 0.1,
    p: int = 10,
    n: int = 24,
    density: float = 0.2,
    input_fraction: float = 0.8,
    target_fraction: float = 0.6,
) -> TrialResult:
    config = config or default_experiment_config()
    dataset, train_ep, unseen_ep, _ = descriptor_family(
        seed, p=p, n=n, noise_std=noise_std, density=density,
        input_fraction=input_fraction, target_fraction=target_fraction,
    )
    try:
        result = train(
            dataset, [train_ep], config, seed=seed,
            learning_rate=learning_rate, max_steps=steps,
        )
    except DivergenceError:
        return TrialResult(
            trial=trial, seed=seed, diverged=True, converged=False,
            true_error=float("nan"), substituted_errors=(),
            permuted_error=float("nan"),
        )
    model = result.model
    metrics, _, _ = generalize(model, dataset, unseen_ep)
    true_error = metrics.mean_generalization_error
    substituted = []
    for tid in train_ep.targets:
        swapped, _, _ = generalize(
            model, dataset, unseen_ep,
            meta_override={"unseen": dataset.mode(tid).meta},
        )
        substituted.append(swapped.mean_generalization_error)
    return TrialResult(
        trial=trial,
        seed=seed,
        diverged=False,
        converged=result.converged,
        true_error=float(true_error),
        substituted_errors=tuple(float(e) for e in substituted),
        permuted_error=float(np.mean(substituted)),
    )


def run_theorem1(
    trials: int = 10,
    base_seed: int = 0,
    config: ModelConfig | None = None,
    steps: int = 400,
    learning_rate: float = 5e-3,
    noise_std: float = 0.1,
    p: int = 10,
    n: int = 24,
    density: float = 0.2,
    input_fraction: float = 0.8,
    target_fraction: float = 0.6,
) -> Theorem1Report:
    if trials < 2:
        raise ValidationError("theorem-1 experiment needs at least 2 trials")
    results = []
    for t in range(trials):
        res = run_theorem1_trial(
            t, base_seed + 1000 * t, config=config, steps=steps,
            learning_rate=learning_rate, noise_std=noise_std,
            p=p, n=n, density=density,
            input_fraction=input_fraction, target_fraction=target_fraction,
        )
        logger.info(
            "trial %d: true %.4g permuted %.4g %s",
            t, res.true_error, res.permuted_error,
            "win" if res.win else ("diverged" if res.diverged else "loss"),
        )
        results.append(res)
    valid = [r for r in results if not r.diverged]
    wins = sum(r.win for r in valid)
    pooled_true = float(np.mean([r.true_error for r in valid])) if valid else float("nan")
    pooled_perm = float(np.mean([r.permuted_error for r in valid])) if valid else float("nan")
    return Theorem1Report(
        trials=tuple(results),
        wins=wins,
        valid_trials=len(valid),
        excluded=len(results) - len(valid),
        pooled_true=pooled_true,
        pooled_permuted=pooled_perm,
    )


# ---------------------------------------------------------------------------
# Standalone link-prediction experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkExperimentResult:
    seed: int
    auc: float
    final_loss: float
    steps: int
    held_out_edges: int
    held_out_non_edges: int

    def to_mapping(self) -> dict:
        return {
            "seed": self.seed,
            "auc": self.auc,
            "final_loss": self.final_loss,
            "steps": self.steps,
            "held_out_edges": self.held_out_edges,
            "held_out_non_edges": self.held_out_non_edges,
        }


def run_link_experiment(
    seed: int,
    p: int = 20,
    density: float = 0.3,
    mask_fraction: float = 0.2,
    steps: int = 500,
    learning_rate: float = 1e-2,
    hidden: int = 16,
    out_dim: int = 16,
) -> LinkExperimentResult:
    """Train the edge scorer with part of its supervision masked.

    The graph follows latent node factors so its edges are predictable from
    the remaining structure. Message passing always sees the full adjacency
    (the semi-supervised setting); only the BCE labels at the held-out pairs
    are hidden. The held-out positives plus an equal number of held-out
    non-edge pairs form the ranking evaluation set.
    """
    rng = np.random.default_rng(seed)
    adjacency = latent_factor_adjacency(p, density, rng)
    iu, ju = np.triu_indices(p, k=1)
    edge_pairs = [(i, j) for i, j in zip(iu, ju) if adjacency[i, j] == 1.0]
    non_pairs = [(i, j) for i, j in zip(iu, ju) if adjacency[i, j] == 0.0]
    k = max(1, int(round(mask_fraction * len(edge_pairs))))
    if len(edge_pairs) < 2 or len(non_pairs) < k:
        raise ValidationError("graph too dense or too sparse for the edge holdout")
    held_pos = [edge_pairs[i] for i in rng.choice(len(edge_pairs), k, replace=False)]
    held_neg = [non_pairs[i] for i in rng.choice(len(non_pairs), k, replace=False)]
    mask = np.ones((p, p))
    for i, j in held_pos + held_neg:
        mask[i, j] = 0.0
        mask[j, i] = 0.0

    features = np.eye(p)
    specs = [
        LayerSpec("gcn", p, hidden, activation="relu"),
        LayerSpec("gcn", hidden, out_dim, activation="identity"),
    ]
    weights = [init_layer_weights(s, rng) for s in specs]
    params = [t for blocks in weights for t in blocks.values()]
    opt = Adam(params, learning_rate=learning_rate)
    final_loss = float("nan")
    for _ in range(steps):
        probs = link_scores(adjacency, features, specs, weights)
        loss = link_loss(probs, adjacency, mask=mask)
        opt.zero_grad()
        loss.backward()
        opt.step()
        final_loss = float(loss.data)
    probs = link_scores(adjacency, features, specs, weights).data
    sym = 0.5 * (probs + probs.T)
    pos_scores = [sym[i, j] for i, j in held_pos]
    neg_scores = [sym[i, j] for i, j in held_neg]
    return LinkExperimentResult(
        seed=seed,
        auc=auc_metric(pos_scores, neg_scores),
        final_loss=final_loss,
        steps=steps,
        held_out_edges=len(held_pos),
        held_out_non_edges=len(held_neg),
    )


# ---------------------------------------------------------------------------
# Descriptor-masking ablation comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AblationComparison:
    seed: int
    full_mse: float
    ablated_mse: float

    @property
    def ablated_worse(self) -> bool:
        return self.ablated_mse > self.full_mse

    def to_mapping(self) -> dict:
        return {
            "seed": self.seed,
            "full_mse": self.full_mse,
            "ablated_mse": self.ablated_mse,
            "ablated_worse": self.ablated_worse,
        }


def run_meta_ablation(
    seed: int,
    steps: int = 400,
    learning_rate: float = 5e-3,
    noise_std: float = 0.1,
    p: int = 10,
    n: int = 24,
    density: float = 0.2,
) -> AblationComparison:
    """Full descriptor vs. mode-type-only descriptor on the same family."""
    dataset, train_ep, unseen_ep, _ = descriptor_family(
        seed, p=p, n=n, noise_std=noise_std, density=density
    )
    held_out = {}
    for ablation in ("full", "hypergnn_2"):
        config = default_experiment_config(ablation=ablation)
        result = train(
            dataset, [train_ep], config, seed=seed,
            learning_rate=learning_rate, max_steps=steps,
        )
        metrics, _, _ = generalize(result.model, dataset, unseen_ep)
        held_out[ablation] = metrics.mean_mse
    return AblationComparison(
        seed=seed,
        full_mse=float(held_out["full"]),
        ablated_mse=float(held_out["hypergnn_2"]),
    )


# ---------------------------------------------------------------------------
# Gradient audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradCheckReport:
    seed: int
    threshold: float
    layer_errors: dict[str, float]
    hypernet_error: float
    episode_error: float

    @property
    def max_error(self) -> float:
        return max([*self.layer_errors.values(), self.hypernet_error, self.episode_error])

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold

    def to_mapping(self) -> dict:
        return {
            "seed": self.seed,
            "threshold": self.threshold,
            "layer_errors": dict(sorted(self.layer_errors.items())),
            "hypernet_error": self.hypernet_error,
            "episode_error": self.episode_error,
            "max_error": self.max_error,
            "passed": self.passed,
        }


def _layer_grad_error(kind: str, rng: np.random.Generator) -> float:
    p, in_dim, out_dim = 4, 3, 4
    spec = LayerSpec(
        kind, in_dim, out_dim,
        activation="relu" if kind != "gat" else "identity",
        heads=2 if kind == "gat" else 1,
        eps=0.1 if kind == "gin" else 0.0,
    )
    adjacency = random_symmetric_adjacency(p, 0.5, rng)
    h = Tensor(rng.normal(size=(p, in_dim)))
    weights = init_layer_weights(spec, rng)
    coeff = Tensor(rng.normal(size=(p, out_dim)))
    params = [weights[name] for name in sorted(weights)]

    def loss():
        out = gnn_forward(adjacency, h, [spec], [weights])
        return tsum(out * coeff)

    return grad_check(loss, params)


def _hypernet_grad_error(rng: np.random.Generator) -> float:
    specs = [
        LayerSpec("gcn", 2, 3, activation="relu"),
        LayerSpec("mlp", 3, 2, activation="identity"),
    ]
    schema = build_schema(specs)
    net = init_hypernet(3, 5, 2, schema, rng)
    meta = rng.normal(size=3)
    coeffs = {
        name: Tensor(rng.normal(size=shape)) for name, shape in schema.blocks
    }

    def loss():
        groups = generate_weights(meta, net)
        total = None
        for i, blocks in enumerate(groups):
            for name, w in blocks.items():
                term = tsum(w * coeffs[f"l{i}.{name}"])
                total = term if total is None else total + term
        return total

    return grad_check(loss, net.parameters())


def episode_gradcheck_setup(seed: int):
    """Tiny two-input one-target episode used for end-to-end gradient audits."""
    modes = (
        SyntheticMode("in0", "input", 1.0, 0.4),
        SyntheticMode("in1", "input", 1.0, 0.4),
        SyntheticMode("t0", "target", 1.0, 0.4, scale=1.3, shift=0.2),
    )
    cfg = SyntheticConfig(p=6, n=2, d=1, noise_std=0.0, modes=modes)
    dataset, _ = gen_synthetic(cfg, seed=seed)
    config = ModelConfig(
        meta_dim=dataset.meta_dim,
        d=1,
        gnn_hidden=4,
        latent_dim=4,
        mlp_hidden=4,
        hyper_hidden=6,
        hyper_depth=2,
        link_hidden=4,
        link_dim=3,
    )
    model = Model(config, seed=seed + 1)
    prepared = prepare_episode(dataset, Episode(("in0", "in1"), ("t0",)))
    return model, prepared


def _episode_grad_error(seed: int) -> float:
    model, prepared = episode_gradcheck_setup(seed)

    def loss():
        total, _, _ = episode_losses(model, prepared)
        return total

    return grad_check(loss, model.trainable_parameters())


def run_gradcheck(seed: int = 0, threshold: float = 1e-4) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    layer_errors = {kind: _layer_grad_error(kind, rng) for kind in LAYER_KINDS}
    hyper_error = _hypernet_grad_error(rng)
    episode_error = _episode_grad_error(seed)
    report = GradCheckReport(
        seed=seed,
        threshold=threshold,
        layer_errors=layer_errors,
        hypernet_error=float(hyper_error),
        episode_error=float(episode_error),
    )
    logger.info("gradcheck seed %d max error %.3g", seed, report.max_error)
    return report


# ---------------------------------------------------------------------------
# Parameter audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamAuditEntry:
    label: str
    mode_count: int
    param_count: int
    param_count_after_forward: int

    def to_mapping(self) -> dict:
        return {
            "label": self.label,
            "mode_count": self.mode_count,
            "param_count": self.param_count,
            "param_count_after_forward": self.param_count_after_forward,
        }


@dataclass(frozen=True)
class ParamAuditReport:
    entries: tuple[ParamAuditEntry, ...]

    @property
    def equal(self) -> bool:
        counts = {e.param_count for e in self.entries} | {
            e.param_count_after_forward for e in self.entries
        }
        return len(counts) == 1

    def to_mapping(self) -> dict:
        return {
            "entries": [e.to_mapping() for e in self.entries],
            "equal": self.equal,
        }


def _audit_dataset(mode_count: int, seed: int):
    if mode_count < 2:
        raise ValidationError("parameter audit needs at least 2 modes")
    n_inputs = max(1, mode_count // 2)
    n_targets = mode_count - n_inputs
    modes = [
        SyntheticMode(f"in{i}", "input", 0.8, 0.3) for i in range(n_inputs)
    ] + [
        SyntheticMode(f"t{k}", "target", 0.6, 0.3, scale=1.0 + 0.1 * k, shift=0.0)
        for k in range(n_targets)
    ]
    cfg = SyntheticConfig(p=8, n=3, d=1, noise_std=0.0, modes=tuple(modes))
    dataset, _ = gen_synthetic(cfg, seed=seed)
    episode = Episode(
        tuple(f"in{i}" for i in range(n_inputs)),
        tuple(f"t{k}" for k in range(n_targets)),
    )
    return dataset, episode


def run_paramaudit(
    config: ModelConfig | None = None,
    mode_counts: tuple[int, ...] = (2, 4, 8),
    seed: int = 0,
    variant_configs: dict[str, ModelConfig] | None = None,
) -> ParamAuditReport:
    """Count trainable scalars per dataset variant and flag any mismatch.

    With ``variant_configs`` the audit instead compares explicit configs
    (the intentional-failure path when widths differ between variants).
    """
    entries = []
    if variant_configs is not None:
        for label, cfg in sorted(variant_configs.items()):
            count = trainable_param_count(cfg)
            entries.append(ParamAuditEntry(label, 0, count, count))
        if not entries:
            raise ValidationError("parameter audit needs at least one variant")
        return ParamAuditReport(entries=tuple(entries))
    config = config or default_experiment_config()
    if len(mode_counts) < 2:
        raise ValidationError("parameter audit needs at least 2 mode-count variants")
    for count in mode_counts:
        dataset, episode = _audit_dataset(count, seed)
        model = Model(config, seed=seed)
        before = sum(int(np.prod(t.shape)) for t in model.trainable_parameters())
        episode_losses(model, prepare_episode(dataset, episode))
        after = sum(int(np.prod(t.shape)) for t in model.trainable_parameters())
        entries.append(ParamAuditEntry(f"{count}_modes", count, before, after))
    return ParamAuditReport(entries=tuple(entries))
