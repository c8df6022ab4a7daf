"""Tests for dataset persistence, synthetic generation, and CSV ingestion."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from graphx.data import (
    Dataset,
    IngestConfig,
    SyntheticConfig,
    SyntheticMode,
    build_correlation_graph,
    gen_synthetic,
    ingest_csv,
    load_dataset,
    random_symmetric_adjacency,
    save_dataset,
    split_dataset,
)
from graphx.errors import ConfigError, ValidationError
from graphx.graphs import ModeGraph, ModeSpec


def full_coverage_config(noise_std=0.0, mixing="affine", n=6, p=5):
    return SyntheticConfig(
        p=p,
        n=n,
        noise_std=noise_std,
        mixing=mixing,
        modes=(
            SyntheticMode(mode_id="in0", role="input", edge_density=0.3),
            SyntheticMode(mode_id="in1", role="input", edge_density=0.3),
            SyntheticMode(mode_id="out0", role="target", edge_density=0.3),
        ),
    )


def counting_dataset(n=10):
    """Every sample is its own index, so split membership is observable."""
    node_ids = ("a", "b")
    samples = np.arange(n, dtype=float)[:, None, None] * np.ones((1, 2, 1))
    spec = ModeSpec(mode_id="m0", meta=np.zeros(2), node_ids=node_ids)
    mode = ModeGraph(spec=spec, adjacency=np.eye(2), samples=samples)
    return Dataset(universe=node_ids, modes=(mode,))


class TestDatasetValidation:
    def test_node_outside_universe_rejected(self):
        spec = ModeSpec(mode_id="m", meta=np.zeros(1), node_ids=("z",))
        mode = ModeGraph(spec=spec, adjacency=np.eye(1), samples=np.zeros((1, 1, 1)))
        with pytest.raises(ValidationError, match="universe"):
            Dataset(universe=("a",), modes=(mode,))

    def test_sample_count_mismatch_rejected(self):
        def mk(mode_id, n):
            spec = ModeSpec(mode_id=mode_id, meta=np.zeros(1), node_ids=("a",))
            return ModeGraph(spec=spec, adjacency=np.eye(1), samples=np.zeros((n, 1, 1)))

        with pytest.raises(ValidationError, match="samples"):
            Dataset(universe=("a",), modes=(mk("x", 2), mk("y", 3)))

    def test_meta_length_mismatch_rejected(self):
        def mk(mode_id, md):
            spec = ModeSpec(mode_id=mode_id, meta=np.zeros(md), node_ids=("a",))
            return ModeGraph(spec=spec, adjacency=np.eye(1), samples=np.zeros((1, 1, 1)))

        with pytest.raises(ValidationError, match="meta"):
            Dataset(universe=("a",), modes=(mk("x", 2), mk("y", 3)))

    def test_mode_lookup(self):
        ds, _ = gen_synthetic(full_coverage_config(), seed=0)
        assert ds.mode("in0").mode_id == "in0"
        with pytest.raises(ValidationError):
            ds.mode("nope")


class TestPersistence:
    def test_round_trip_structurally_equal(self, tmp_path):
        ds, _ = gen_synthetic(full_coverage_config(noise_std=0.3), seed=3)
        path = tmp_path / "ds.json"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.universe == ds.universe
        assert back.mode_ids == ds.mode_ids
        for a, b in zip(ds.modes, back.modes):
            assert a.node_ids == b.node_ids
            assert np.array_equal(a.adjacency, b.adjacency)
            assert np.array_equal(a.samples, b.samples)
            assert np.array_equal(a.meta, b.meta)

    def test_floats_survive_exactly(self, tmp_path):
        ds, _ = gen_synthetic(full_coverage_config(noise_std=1e-7), seed=9)
        path = tmp_path / "ds.json"
        save_dataset(ds, path)
        back = load_dataset(path)
        for a, b in zip(ds.modes, back.modes):
            assert a.samples.tobytes() == b.samples.tobytes()

    def test_truncated_file_rejected(self, tmp_path):
        ds, _ = gen_synthetic(full_coverage_config(), seed=1)
        path = tmp_path / "ds.json"
        save_dataset(ds, path)
        path.write_text(path.read_text()[:-40])
        with pytest.raises(ValidationError, match="malformed"):
            load_dataset(path)

    def test_version_mismatch_rejected(self, tmp_path):
        ds, _ = gen_synthetic(full_coverage_config(), seed=1)
        path = tmp_path / "ds.json"
        save_dataset(ds, path)
        obj = json.loads(path.read_text())
        obj["schema_version"] = 99
        path.write_text(json.dumps(obj))
        with pytest.raises(ValidationError, match="version"):
            load_dataset(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="not found"):
            load_dataset(tmp_path / "absent.json")


class TestGenSynthetic:
    def test_identity_mixing_zero_noise_equals_pooled(self):
        ds, truth = gen_synthetic(full_coverage_config(mixing="identity"), seed=2)
        pooled = 0.5 * (ds.mode("in0").samples + ds.mode("in1").samples)
        assert_allclose(ds.mode("out0").samples, pooled, rtol=1e-15)
        assert truth.scales["out0"] == 1.0
        assert truth.shifts["out0"] == 0.0

    def test_affine_mixing_matches_recorded_coefficients(self):
        ds, truth = gen_synthetic(full_coverage_config(), seed=4)
        pooled = 0.5 * (ds.mode("in0").samples + ds.mode("in1").samples)
        want = truth.scales["out0"] * pooled + truth.shifts["out0"]
        assert_allclose(ds.mode("out0").samples, want, rtol=1e-12)

    def test_meta_carries_the_coefficients(self):
        ds, truth = gen_synthetic(full_coverage_config(), seed=5)
        meta = ds.mode("out0").meta
        assert_allclose(meta[:2], [0.0, 1.0])
        assert meta[2] == truth.scales["out0"]
        assert meta[3] == truth.shifts["out0"]
        assert_allclose(ds.mode("in0").meta[:2], [1.0, 0.0])

    def test_same_seed_identical_bytes(self, tmp_path):
        cfg = full_coverage_config(noise_std=0.2)
        a, _ = gen_synthetic(cfg, seed=11)
        b, _ = gen_synthetic(cfg, seed=11)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        save_dataset(a, pa)
        save_dataset(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_noise_mean_obeys_law_of_large_numbers(self):
        cfg = full_coverage_config(noise_std=1.0, n=1000, p=10)
        ds, truth = gen_synthetic(cfg, seed=6)
        pooled = 0.5 * (ds.mode("in0").samples + ds.mode("in1").samples)
        noise = ds.mode("out0").samples - (
            truth.scales["out0"] * pooled + truth.shifts["out0"]
        )
        draws = noise.size
        assert draws == 10_000
        assert abs(noise.mean()) < 3.0 / np.sqrt(draws)

    def test_partial_coverage_pools_present_modes_only(self):
        cfg = SyntheticConfig(
            p=6,
            n=4,
            modes=(
                SyntheticMode(mode_id="in0", role="input", node_fraction=0.5),
                SyntheticMode(mode_id="in1", role="input", node_fraction=0.5),
                SyntheticMode(mode_id="out0", role="target", node_fraction=1.0),
            ),
        )
        ds, truth = gen_synthetic(cfg, seed=7)
        in0, in1, out = ds.mode("in0"), ds.mode("in1"), ds.mode("out0")
        cover = {}
        for m in (in0, in1):
            for pos, node in enumerate(m.node_ids):
                cover.setdefault(node, []).append(m.samples[:, pos, :])
        for pos, node in enumerate(out.node_ids):
            hits = cover.get(node, [])
            pooled = np.mean(hits, axis=0) if hits else np.zeros((cfg.n, 1))
            want = truth.scales["out0"] * pooled + truth.shifts["out0"]
            assert_allclose(out.samples[:, pos, :], want, rtol=1e-12)

    def test_degenerate_fraction_rejected(self):
        with pytest.raises(ConfigError):
            SyntheticMode(mode_id="x", role="input", node_fraction=0.0)

    def test_requires_both_roles(self):
        with pytest.raises(ConfigError):
            SyntheticConfig(modes=(SyntheticMode(mode_id="x", role="input"),))


class TestCorrelationGraph:
    def test_identical_series_connected(self):
        s = np.vstack([np.arange(5.0), np.arange(5.0)])
        a = build_correlation_graph(s, 0.9)
        assert a[0, 1] == 1.0

    def test_anticorrelated_series_disconnected(self):
        s = np.vstack([np.arange(5.0), -np.arange(5.0)])
        a = build_correlation_graph(s, 0.1)
        assert a[0, 1] == 0.0

    def test_matches_pairwise_pearson_oracle(self):
        rng = np.random.default_rng(8)
        series = rng.normal(size=(5, 30))
        series[2] += series[0]
        a = build_correlation_graph(series, 0.5)
        for u in range(5):
            for v in range(u + 1, 5):
                r = np.corrcoef(series[u], series[v])[0, 1]
                assert a[u, v] == (1.0 if r > 0.5 else 0.0)

    def test_zero_variance_series_isolated(self):
        series = np.vstack([np.ones(6), np.arange(6.0)])
        a = build_correlation_graph(series, 0.3)
        assert a[0, 1] == 0.0
        assert a[0, 0] == 1.0

    def test_too_few_time_points_rejected(self):
        with pytest.raises(ValidationError):
            build_correlation_graph(np.ones((3, 1)), 0.5)

    def test_threshold_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            build_correlation_graph(np.ones((2, 4)), 1.5)

    def test_output_symmetric_self_looped(self):
        rng = np.random.default_rng(9)
        a = build_correlation_graph(rng.normal(size=(7, 12)), 0.4)
        assert np.array_equal(a, a.T)
        assert np.all(np.diag(a) == 1.0)


class TestSplitDataset:
    def test_everything_in_train(self):
        ds = counting_dataset(8)
        train, val, test = split_dataset(ds, (1.0, 0.0, 0.0), seed=0)
        assert train.n == 8 and val is not None and test is not None
        assert val.n == 0 or val.n >= 0  # empty splits allowed for zero ratios

    def test_partition_is_disjoint_and_complete(self):
        ds = counting_dataset(10)
        parts = split_dataset(ds, (0.6, 0.2, 0.2), seed=1)
        seen = []
        for part in parts:
            seen.extend(part.modes[0].samples[:, 0, 0].astype(int).tolist())
        assert sorted(seen) == list(range(10))

    def test_same_seed_same_partition(self):
        ds = counting_dataset(12)
        a = split_dataset(ds, (0.5, 0.25, 0.25), seed=5)
        b = split_dataset(ds, (0.5, 0.25, 0.25), seed=5)
        for x, y in zip(a, b):
            assert np.array_equal(x.modes[0].samples, y.modes[0].samples)

    def test_too_few_samples_rejected(self):
        ds = counting_dataset(2)
        with pytest.raises(ValidationError, match="too few"):
            split_dataset(ds, (0.5, 0.3, 0.2), seed=0)

    def test_bad_ratios_rejected(self):
        ds = counting_dataset(4)
        with pytest.raises(ConfigError):
            split_dataset(ds, (0.5, 0.2), seed=0)


class TestIngestCsv:
    def write_csv(self, path, header, rows):
        lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")

    def test_blocks_become_modes(self, tmp_path):
        rng = np.random.default_rng(10)
        path = tmp_path / "series.csv"
        values = rng.normal(size=(8, 3))
        self.write_csv(path, ["c", "a", "b"], values)
        ds = ingest_csv(IngestConfig(csv_path=str(path), rho=0.5, num_modes=2))
        assert ds.universe == ("a", "b", "c")
        assert len(ds.modes) == 2
        assert ds.n == 4
        order = [1, 2, 0]  # csv columns reordered to sorted universe
        assert_allclose(ds.modes[0].samples[:, :, 0], values[:4][:, order])
        assert_allclose(ds.modes[1].samples[:, :, 0], values[4:][:, order])

    def test_adjacency_from_block_correlation(self, tmp_path):
        path = tmp_path / "series.csv"
        t = np.arange(6.0)
        values = np.stack([t, t * 2.0, -t], axis=1)
        self.write_csv(path, ["a", "b", "c"], values)
        ds = ingest_csv(IngestConfig(csv_path=str(path), rho=0.8, num_modes=1))
        a = ds.modes[0].adjacency
        assert a[0, 1] == 1.0  # proportional series
        assert a[0, 2] == 0.0  # anticorrelated series

    def test_transposed_layout_matches(self, tmp_path):
        rng = np.random.default_rng(11)
        values = rng.normal(size=(6, 2))
        wide = tmp_path / "wide.csv"
        tall = tmp_path / "tall.csv"
        self.write_csv(wide, ["a", "b"], values)
        lines = [
            "a," + ",".join(str(v) for v in values[:, 0]),
            "b," + ",".join(str(v) for v in values[:, 1]),
        ]
        tall.write_text("\n".join(lines) + "\n")
        d1 = ingest_csv(IngestConfig(csv_path=str(wide), num_modes=2))
        d2 = ingest_csv(IngestConfig(csv_path=str(tall), num_modes=2, transpose=True))
        for m1, m2 in zip(d1.modes, d2.modes):
            assert np.array_equal(m1.samples, m2.samples)
            assert np.array_equal(m1.adjacency, m2.adjacency)

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,x\n")
        with pytest.raises(ValidationError, match="malformed"):
            ingest_csv(IngestConfig(csv_path=str(path)))

    def test_missing_file_rejected(self):
        with pytest.raises(ValidationError, match="not found"):
            ingest_csv(IngestConfig(csv_path="/nonexistent.csv"))

    def test_too_few_rows_per_mode_rejected(self, tmp_path):
        path = tmp_path / "short.csv"
        self.write_csv(path, ["a", "b"], np.ones((3, 2)))
        with pytest.raises(ValidationError, match="modes"):
            ingest_csv(IngestConfig(csv_path=str(path), num_modes=2))


class TestRandomAdjacency:
    def test_valid_and_density_responsive(self):
        rng = np.random.default_rng(12)
        sparse = random_symmetric_adjacency(30, 0.1, rng)
        dense = random_symmetric_adjacency(30, 0.8, rng)
        for a in (sparse, dense):
            assert np.array_equal(a, a.T)
            assert np.all(np.diag(a) == 1.0)
        assert dense.sum() > sparse.sum()
