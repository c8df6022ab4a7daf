"""Dataset model, JSON persistence, synthetic generation, CSV ingestion.

The synthetic generator is the testbed for the generalization experiments:
every target mode's attributes are an affine transform of the mean-pooled
input attributes, with the transform's coefficients written into the
mode's meta vector.  Meta therefore fully determines the transformation,
which is exactly the premise the sufficient-meta experiment needs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ValidationError
from .graphs import ModeGraph, ModeSpec

Array = np.ndarray

DATASET_SCHEMA_VERSION = 1

# Meta vector layout used by the synthetic generator and CSV ingestion:
# a mode-type one-hot prefix followed by numeric coefficients.
SYNTH_META_DIM = 4
SYNTH_TYPE_DIMS = 2


@dataclass(frozen=True, eq=False)
class Dataset:
    """A universe of nodes plus aligned modes (same n samples each)."""

    universe: tuple[str, ...]
    modes: tuple[ModeGraph, ...]

    def __post_init__(self):
        object.__setattr__(self, "universe", tuple(self.universe))
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ValidationError("dataset needs at least one mode")
        if len(set(self.universe)) != len(self.universe):
            raise ValidationError("universe node ids must be unique")
        ids = [m.mode_id for m in self.modes]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate mode ids in dataset")
        unset = set(self.universe)
        first = self.modes[0]
        for mode in self.modes:
            if not set(mode.node_ids) <= unset:
                raise ValidationError(
                    f"mode {mode.mode_id!r} contains nodes outside the universe"
                )
            if mode.n != first.n:
                raise ValidationError(
                    f"mode {mode.mode_id!r} has {mode.n} samples, expected {first.n}"
                )
            if mode.d != first.d:
                raise ValidationError(
                    f"mode {mode.mode_id!r} has d={mode.d}, expected {first.d}"
                )
            if mode.meta.shape != first.meta.shape:
                raise ValidationError(
                    f"mode {mode.mode_id!r} meta length {mode.meta.shape[0]} "
                    f"differs from {first.meta.shape[0]}"
                )

    @property
    def p(self) -> int:
        return len(self.universe)

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def d(self) -> int:
        return self.modes[0].d

    @property
    def meta_dim(self) -> int:
        return self.modes[0].meta.shape[0]

    @property
    def mode_ids(self) -> tuple[str, ...]:
        return tuple(m.mode_id for m in self.modes)

    def mode(self, mode_id: str) -> ModeGraph:
        for m in self.modes:
            if m.mode_id == mode_id:
                return m
        raise ValidationError(f"unknown mode id {mode_id!r}")


# ----------------------------------------------------------------------
# JSON persistence
# ----------------------------------------------------------------------

def _adjacency_to_edges(a: Array) -> list[list[int]]:
    upper = np.argwhere(np.triu(a, 1) == 1.0)
    return [[int(u), int(v)] for u, v in upper]


def _edges_to_adjacency(edges, p: int) -> Array:
    a = np.eye(p)
    for pair in edges:
        if len(pair) != 2:
            raise ValidationError(f"edge entry {pair!r} is not a pair")
        u, v = int(pair[0]), int(pair[1])
        if not (0 <= u < p and 0 <= v < p):
            raise ValidationError(f"edge ({u},{v}) out of range for {p} nodes")
        a[u, v] = a[v, u] = 1.0
    return a


def dataset_to_mapping(ds: Dataset) -> dict:
    modes = []
    for m in ds.modes:
        modes.append(
            {
                "mode_id": m.mode_id,
                "meta": [float(x) for x in m.meta],
                "node_ids": list(m.node_ids),
                "edges": _adjacency_to_edges(m.adjacency),
                "samples": {
                    "shape": list(m.samples.shape),
                    "values": [float(x) for x in m.samples.reshape(-1)],
                },
            }
        )
    return {
        "schema_version": DATASET_SCHEMA_VERSION,
        "universe": list(ds.universe),
        "n": ds.n,
        "d": ds.d,
        "meta_dim": ds.meta_dim,
        "modes": modes,
    }


def dataset_from_mapping(obj: dict) -> Dataset:
    if not isinstance(obj, dict):
        raise ValidationError("dataset file must contain a JSON object")
    version = obj.get("schema_version")
    if version != DATASET_SCHEMA_VERSION:
        raise ValidationError(
            f"dataset schema version {version!r} not supported "
            f"(expected {DATASET_SCHEMA_VERSION})"
        )
    try:
        universe = tuple(str(v) for v in obj["universe"])
        raw_modes = obj["modes"]
    except KeyError as exc:
        raise ValidationError(f"dataset file missing field {exc}") from exc
    modes = []
    for raw in raw_modes:
        try:
            node_ids = tuple(str(v) for v in raw["node_ids"])
            shape = tuple(int(s) for s in raw["samples"]["shape"])
            values = np.asarray(raw["samples"]["values"], dtype=np.float64)
            spec = ModeSpec(
                mode_id=str(raw["mode_id"]),
                meta=np.asarray(raw["meta"], dtype=np.float64),
                node_ids=node_ids,
            )
            adjacency = _edges_to_adjacency(raw["edges"], len(node_ids))
        except KeyError as exc:
            raise ValidationError(f"mode entry missing field {exc}") from exc
        if values.size != int(np.prod(shape)):
            raise ValidationError(
                f"mode {spec.mode_id!r}: {values.size} sample values do not fill "
                f"shape {shape}"
            )
        modes.append(ModeGraph(spec=spec, adjacency=adjacency, samples=values.reshape(shape)))
    ds = Dataset(universe=universe, modes=tuple(modes))
    declared = (obj.get("n"), obj.get("d"), obj.get("meta_dim"))
    if declared != (ds.n, ds.d, ds.meta_dim):
        raise ValidationError(
            f"dataset header {declared} disagrees with mode contents "
            f"{(ds.n, ds.d, ds.meta_dim)}"
        )
    return ds


def save_dataset(ds: Dataset, path) -> None:
    text = json.dumps(dataset_to_mapping(ds), sort_keys=True, indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"dataset file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed dataset JSON in {path}: {exc}") from exc
    return dataset_from_mapping(obj)


def bundled_dataset_path(name: str = "climate_mini") -> Path:
    return Path(__file__).parent / "assets" / f"{name}.json"


# ----------------------------------------------------------------------
# splitting
# ----------------------------------------------------------------------

def _subset(ds: Dataset, indices: Array) -> Dataset:
    modes = tuple(
        ModeGraph(spec=m.spec, adjacency=m.adjacency, samples=m.samples[indices])
        for m in ds.modes
    )
    return Dataset(universe=ds.universe, modes=modes)


def split_dataset(
    ds: Dataset, ratios: Sequence[float], seed: int
) -> tuple[Dataset, ...]:
    """Partition samples into train/val/test, identically across modes."""
    ratios = [float(r) for r in ratios]
    if any(r < 0.0 for r in ratios) or not np.isclose(sum(ratios), 1.0):
        raise ConfigError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    n = ds.n
    counts = [int(np.floor(r * n)) for r in ratios]
    remainders = [r * n - c for r, c in zip(ratios, counts)]
    for _ in range(n - sum(counts)):
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    for r, c in zip(ratios, counts):
        if r > 0.0 and c == 0:
            raise ValidationError(
                f"{n} samples are too few for non-empty splits at ratios {ratios}"
            )
    perm = np.random.default_rng(seed).permutation(n)
    parts = []
    start = 0
    for c in counts:
        parts.append(_subset(ds, np.sort(perm[start : start + c])))
        start += c
    return tuple(parts)


# ----------------------------------------------------------------------
# synthetic generation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticMode:
    """One mode's recipe: role, coverage, topology density, optional params."""

    mode_id: str
    role: str
    node_fraction: float = 1.0
    edge_density: float = 0.2
    scale: float | None = None
    shift: float | None = None

    def __post_init__(self):
        if self.role not in ("input", "target"):
            raise ConfigError(f"mode role must be input or target, got {self.role!r}")
        if not 0.0 < self.node_fraction <= 1.0:
            raise ConfigError(f"node_fraction must lie in (0,1], got {self.node_fraction}")
        if not 0.0 <= self.edge_density <= 1.0:
            raise ConfigError(f"edge_density must lie in [0,1], got {self.edge_density}")


@dataclass(frozen=True)
class SyntheticConfig:
    """Recipe for a synthetic multi-mode dataset."""

    p: int = 10
    n: int = 24
    d: int = 1
    noise_std: float = 0.0
    mixing: str = "affine"
    modes: tuple[SyntheticMode, ...] = (
        SyntheticMode(mode_id="in0", role="input"),
        SyntheticMode(mode_id="in1", role="input"),
        SyntheticMode(mode_id="out0", role="target"),
    )

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.p < 1 or self.n < 1 or self.d < 1:
            raise ConfigError(f"p, n, d must be positive, got {self.p}, {self.n}, {self.d}")
        if self.noise_std < 0.0:
            raise ConfigError(f"noise_std must be non-negative, got {self.noise_std}")
        if self.mixing not in ("affine", "identity"):
            raise ConfigError(f"mixing must be affine or identity, got {self.mixing!r}")
        roles = [m.role for m in self.modes]
        if "input" not in roles or "target" not in roles:
            raise ConfigError("synthetic config needs at least one input and one target mode")


@dataclass(frozen=True)
class GroundTruth:
    """The realized transformation coefficients behind a synthetic dataset."""

    scales: dict[str, float]
    shifts: dict[str, float]
    mixing: str
    noise_std: float


def random_symmetric_adjacency(p: int, density: float, rng: np.random.Generator) -> Array:
    upper = np.triu(rng.random((p, p)) < density, 1)
    a = (upper + upper.T).astype(np.float64)
    np.fill_diagonal(a, 1.0)
    return a


def latent_factor_adjacency(
    p: int, density: float, rng: np.random.Generator, dim: int = 2
) -> Array:
    """Graph whose edges follow latent node factors, at a target density.

    Nodes get latent vectors; the highest-inner-product pairs become edges
    until the requested off-diagonal density is met.  Unlike a uniform
    random graph, held-out edges here are predictable from the rest of the
    structure, which is what link-prediction experiments need.
    """
    if not 0.0 < density < 1.0:
        raise ValidationError("density must lie strictly between 0 and 1")
    if p < 2:
        raise ValidationError("latent factor graph needs at least 2 nodes")
    z = rng.normal(size=(p, dim))
    scores = z @ z.T
    iu, ju = np.triu_indices(p, k=1)
    vals = scores[iu, ju]
    m = max(1, int(round(density * vals.size)))
    order = np.argsort(vals)[::-1]
    a = np.zeros((p, p))
    for idx in order[:m]:
        a[iu[idx], ju[idx]] = 1.0
        a[ju[idx], iu[idx]] = 1.0
    np.fill_diagonal(a, 1.0)
    return a


def _synth_meta(role: str, scale: float, shift: float) -> Array:
    onehot = [1.0, 0.0] if role == "input" else [0.0, 1.0]
    return np.array(onehot + [scale, shift])


def gen_synthetic(cfg: SyntheticConfig, seed: int) -> tuple[Dataset, GroundTruth]:
    """Build a dataset where meta coefficients determine each target mode.

    Input modes carry i.i.d. standard normal attributes.  Each target
    mode's attributes are ``scale * pooled + shift`` plus optional
    Gaussian noise, where ``pooled`` is the per-node mean of the input
    attributes over the input modes containing that node.  With zero
    noise the task is exactly solvable from the inputs.
    """
    rng = np.random.default_rng(seed)
    width = len(str(max(cfg.p - 1, 1)))
    universe = tuple(f"v{i:0{width}d}" for i in range(cfg.p))

    subsets: dict[str, Array] = {}
    adjacencies: dict[str, Array] = {}
    for mode in cfg.modes:
        size = max(1, int(round(mode.node_fraction * cfg.p)))
        subsets[mode.mode_id] = np.sort(rng.choice(cfg.p, size=size, replace=False))
        adjacencies[mode.mode_id] = random_symmetric_adjacency(size, mode.edge_density, rng)

    input_modes = [m for m in cfg.modes if m.role == "input"]
    input_samples: dict[str, Array] = {
        m.mode_id: rng.normal(size=(cfg.n, len(subsets[m.mode_id]), cfg.d))
        for m in input_modes
    }

    pooled = np.zeros((cfg.n, cfg.p, cfg.d))
    coverage = np.zeros(cfg.p)
    for m in input_modes:
        idx = subsets[m.mode_id]
        pooled[:, idx, :] += input_samples[m.mode_id]
        coverage[idx] += 1.0
    pooled /= np.where(coverage > 0.0, coverage, 1.0)[None, :, None]

    scales: dict[str, float] = {}
    shifts: dict[str, float] = {}
    graphs = []
    for mode in cfg.modes:
        idx = subsets[mode.mode_id]
        node_ids = tuple(universe[i] for i in idx)
        if mode.role == "input":
            scale, shift = 1.0, 0.0
            samples = input_samples[mode.mode_id]
        else:
            if cfg.mixing == "identity":
                scale, shift = 1.0, 0.0
            else:
                scale = mode.scale if mode.scale is not None else float(rng.uniform(0.5, 1.5))
                shift = mode.shift if mode.shift is not None else float(rng.uniform(-1.0, 1.0))
            samples = scale * pooled[:, idx, :] + shift
            if cfg.noise_std > 0.0:
                samples = samples + cfg.noise_std * rng.normal(size=samples.shape)
            scales[mode.mode_id] = scale
            shifts[mode.mode_id] = shift
        spec = ModeSpec(
            mode_id=mode.mode_id,
            meta=_synth_meta(mode.role, scale, shift),
            node_ids=node_ids,
        )
        graphs.append(
            ModeGraph(spec=spec, adjacency=adjacencies[mode.mode_id], samples=samples)
        )
    ds = Dataset(universe=universe, modes=tuple(graphs))
    return ds, GroundTruth(
        scales=scales, shifts=shifts, mixing=cfg.mixing, noise_std=cfg.noise_std
    )


# ----------------------------------------------------------------------
# correlation graphs and CSV ingestion
# ----------------------------------------------------------------------

def build_correlation_graph(series: Array, rho: float) -> Array:
    """Edge (u,v) iff the Pearson correlation of their series exceeds rho.

    ``series`` has one row per node, one column per time point.  A
    zero-variance series correlates 0 with everything; self-loops are
    always present.
    """
    if not 0.0 < rho < 1.0:
        raise ConfigError(f"correlation threshold must lie in (0,1), got {rho}")
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2 or series.shape[1] < 2:
        raise ValidationError(
            f"correlation graph needs a (nodes, time>=2) matrix, got {series.shape}"
        )
    centred = series - series.mean(axis=1, keepdims=True)
    norms = np.sqrt((centred * centred).sum(axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    corr = (centred @ centred.T) / np.outer(safe, safe)
    corr[norms == 0.0, :] = 0.0
    corr[:, norms == 0.0] = 0.0
    corr = 0.5 * (corr + corr.T)
    a = (corr > rho).astype(np.float64)
    np.fill_diagonal(a, 1.0)
    return a


@dataclass(frozen=True)
class IngestConfig:
    """How to turn one CSV of time series into a multi-mode dataset.

    The CSV holds a header row of node ids and one row per time step
    (``transpose=True`` for the node-per-row layout).  Rows are cut into
    ``num_modes`` equal contiguous blocks (remainder dropped); each block
    becomes one mode whose graph comes from correlation thresholding of
    the block's series and whose rows are the samples.
    """

    csv_path: str
    rho: float = 0.5
    num_modes: int = 2
    transpose: bool = False

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"correlation threshold must lie in (0,1), got {self.rho}")
        if self.num_modes < 1:
            raise ConfigError(f"num_modes must be positive, got {self.num_modes}")


def _parse_csv_grid(path: Path, transpose: bool) -> tuple[list[str], Array]:
    """Return (node ids, values of shape (time, nodes)) from either layout."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValidationError(f"csv needs a header and at least one data row: {path}")
    try:
        if transpose:
            node_ids = [row[0].strip() for row in rows]
            values = np.array(
                [[float(c) for c in row[1:]] for row in rows], dtype=np.float64
            ).T
        else:
            node_ids = [c.strip() for c in rows[0]]
            values = np.array(
                [[float(c) for c in row] for row in rows[1:]], dtype=np.float64
            )
    except ValueError as exc:
        raise ValidationError(f"malformed csv in {path}: {exc}") from exc
    if values.ndim != 2 or values.shape[1] != len(node_ids):
        raise ValidationError(
            f"csv rows of uneven width in {path}: expected {len(node_ids)} columns"
        )
    return node_ids, values


def ingest_csv(cfg: IngestConfig) -> Dataset:
    path = Path(cfg.csv_path)
    if not path.exists():
        raise ValidationError(f"csv file not found: {path}")
    node_ids, values = _parse_csv_grid(path, cfg.transpose)
    if len(set(node_ids)) != len(node_ids):
        raise ValidationError(f"duplicate node ids in csv header: {path}")
    steps = values.shape[0]
    block = steps // cfg.num_modes
    if block < 2:
        raise ValidationError(
            f"{steps} rows cannot fill {cfg.num_modes} modes with >=2 rows each"
        )
    universe = tuple(sorted(node_ids))
    order = np.argsort(node_ids)
    modes = []
    for k in range(cfg.num_modes):
        chunk = values[k * block : (k + 1) * block][:, order]
        adjacency = build_correlation_graph(chunk.T, cfg.rho)
        onehot = [0.0] * cfg.num_modes
        onehot[k] = 1.0
        centre = (k + 0.5) / cfg.num_modes
        spec = ModeSpec(
            mode_id=f"block{k}",
            meta=np.array(onehot + [centre]),
            node_ids=universe,
        )
        modes.append(
            ModeGraph(spec=spec, adjacency=adjacency, samples=chunk[:, :, None])
        )
    return Dataset(universe=universe, modes=tuple(modes))
