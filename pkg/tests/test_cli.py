"""End-to-end tests for the command-line harness."""

import json
import logging

import numpy as np
import pytest

from graphx.cli import apply_overrides, main, parse_episode
from graphx.data import load_dataset
from graphx.errors import ConfigError
from graphx.pipeline import ModelConfig, load_checkpoint
from graphx.report import read_loss_history_csv, read_report_json


def run_cli(*argv) -> int:
    return main(list(argv))


def gen_dataset(tmp_path, seed=7, p=8, n=12):
    out = tmp_path / "gen"
    code = run_cli(
        "gen-data", "--seed", str(seed), "--out", str(out),
        "--set", f"synthetic.p={p}", "--set", f"synthetic.n={n}",
    )
    assert code == 0
    return out / "dataset.json"


def train_small(tmp_path, data_path, steps=25, seed=3):
    out = tmp_path / "train"
    code = run_cli(
        "train", "--seed", str(seed), "--out", str(out),
        "--set", f"dataset={data_path}",
        "--episode", "in0,in1->t0,t1",
        "--set", f"train.max_steps={steps}",
    )
    assert code == 0
    return out


class TestConfigAssembly:
    def test_override_nested_key(self):
        cfg = apply_overrides({"train": {"tol": 1.0}}, ["train.tol=0.5"])
        assert cfg["train"]["tol"] == 0.5

    def test_override_parses_json_values(self):
        cfg = apply_overrides({}, ["a=[1,2]", "b=true", "c=null", "d=1e-3"])
        assert cfg["a"] == [1, 2]
        assert cfg["b"] is True
        assert cfg["c"] is None
        assert cfg["d"] == 1e-3

    def test_override_keeps_plain_strings(self):
        cfg = apply_overrides({}, ["dataset=runs/data.json"])
        assert cfg["dataset"] == "runs/data.json"

    def test_override_creates_missing_sections(self):
        cfg = apply_overrides({}, ["model.gnn_hidden=4"])
        assert cfg["model"]["gnn_hidden"] == 4

    def test_override_without_equals_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides({}, ["train.tol"])

    def test_override_empty_key_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides({}, ["=3"])

    def test_episode_parses_sources_and_targets(self):
        spec = parse_episode("a, b ->c,d ")
        assert spec == {"sources": ["a", "b"], "targets": ["c", "d"]}

    def test_episode_without_arrow_rejected(self):
        with pytest.raises(ConfigError):
            parse_episode("a,b,c")

    def test_episode_without_targets_rejected(self):
        with pytest.raises(ConfigError):
            parse_episode("a,b->")


class TestGenData:
    def test_writes_dataset_and_report(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        ds = load_dataset(data_path)
        assert ds.mode_ids == ("in0", "in1", "t0", "t1")
        assert len(ds.universe) == 8
        report = read_report_json(tmp_path / "gen" / "report.json")
        assert report["command"] == "gen-data"
        assert report["seed"] == 7
        assert "dataset.json" in report["artifacts"]

    def test_reruns_are_byte_identical(self, tmp_path):
        a = gen_dataset(tmp_path / "a")
        b = gen_dataset(tmp_path / "b")
        assert a.read_bytes() == b.read_bytes()
        ra = (tmp_path / "a" / "gen" / "report.json").read_bytes()
        rb = (tmp_path / "b" / "gen" / "report.json").read_bytes()
        assert ra == rb

    def test_config_file_feeds_run(self, tmp_path):
        cfg = {"synthetic": {"p": 5, "n": 6}}
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
        out = tmp_path / "out"
        code = run_cli("gen-data", "--config", str(cfg_path), "--out", str(out))
        assert code == 0
        ds = load_dataset(out / "dataset.json")
        assert len(ds.universe) == 5
        assert ds.n == 6

    def test_set_overrides_config_file(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({"synthetic": {"p": 5}}), encoding="utf-8")
        out = tmp_path / "out"
        code = run_cli(
            "gen-data", "--config", str(cfg_path), "--out", str(out),
            "--set", "synthetic.p=9",
        )
        assert code == 0
        assert len(load_dataset(out / "dataset.json").universe) == 9

    def test_seed_flag_overrides_config_file(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({"seed": 1}), encoding="utf-8")
        out = tmp_path / "out"
        code = run_cli(
            "gen-data", "--config", str(cfg_path), "--seed", "5", "--out", str(out)
        )
        assert code == 0
        assert read_report_json(out / "report.json")["seed"] == 5

    def test_malformed_config_file_exits_one(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text("{not json", encoding="utf-8")
        assert run_cli("gen-data", "--config", str(cfg_path),
                       "--out", str(tmp_path / "out")) == 1

    def test_missing_config_file_exits_one(self, tmp_path):
        assert run_cli("gen-data", "--config", str(tmp_path / "nope.json"),
                       "--out", str(tmp_path / "out")) == 1


class TestTrain:
    def test_writes_all_artifacts(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        out = train_small(tmp_path, data_path)
        for name in ("report.json", "metrics.csv", "loss_history.csv",
                     "checkpoint.bin", "loss_curve.png", "pred_vs_truth.png"):
            assert (out / name).is_file(), name
        report = read_report_json(out / "report.json")
        assert report["results"]["steps_run"] == 25
        assert set(report["artifacts"]) >= {"checkpoint.bin", "loss_curve.png"}

    def test_history_csv_matches_report_totals(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        out = train_small(tmp_path, data_path)
        rows = read_loss_history_csv(out / "loss_history.csv")
        report = read_report_json(out / "report.json")
        assert len(rows) == 25
        assert rows[0][3] == pytest.approx(report["results"]["initial_total"])
        assert rows[-1][3] == pytest.approx(report["results"]["final_total"])

    def test_checkpoint_reloads(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        out = train_small(tmp_path, data_path)
        model = load_checkpoint(out / "checkpoint.bin")
        assert model.seed == 3
        assert isinstance(model.config, ModelConfig)

    def test_reruns_are_byte_identical(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        a = train_small(tmp_path / "a", data_path)
        b = train_small(tmp_path / "b", data_path)
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (a / "checkpoint.bin").read_bytes() == (b / "checkpoint.bin").read_bytes()

    def test_zero_steps_skips_loss_curve(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        out = tmp_path / "train0"
        code = run_cli(
            "train", "--out", str(out), "--set", f"dataset={data_path}",
            "--episode", "in0->t0", "--set", "train.max_steps=0",
        )
        assert code == 0
        assert not (out / "loss_curve.png").exists()
        report = read_report_json(out / "report.json")
        assert "loss_curve.png" not in report["artifacts"]
        assert report["results"]["final_total"] is None

    def test_missing_dataset_exits_one(self, tmp_path):
        code = run_cli(
            "train", "--out", str(tmp_path / "out"),
            "--set", f"dataset={tmp_path / 'missing.json'}",
            "--episode", "in0->t0",
        )
        assert code == 1

    def test_missing_episode_exits_one(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        code = run_cli(
            "train", "--out", str(tmp_path / "out"),
            "--set", f"dataset={data_path}",
        )
        assert code == 1

    def test_bad_episode_mode_exits_one(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        code = run_cli(
            "train", "--out", str(tmp_path / "out"),
            "--set", f"dataset={data_path}", "--episode", "in0->nope",
        )
        assert code == 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergent_run_exits_two(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        code = run_cli(
            "train", "--out", str(tmp_path / "out"),
            "--set", f"dataset={data_path}", "--episode", "in0->t0",
            "--set", "train.learning_rate=1e18", "--set", "train.max_steps=50",
        )
        assert code == 2


class TestEvalAndGeneralize:
    def test_eval_reports_metrics(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        train_out = train_small(tmp_path, data_path)
        out = tmp_path / "eval"
        code = run_cli(
            "eval", "--out", str(out),
            "--set", f"dataset={data_path}",
            "--set", f"checkpoint={train_out / 'checkpoint.bin'}",
            "--episode", "in0,in1->t0,t1",
        )
        assert code == 0
        report = read_report_json(out / "report.json")
        metrics = report["results"]["evaluation"]["metrics"]
        assert set(metrics["targets"]) == {"t0", "t1"}
        assert (out / "metrics.csv").is_file()
        assert (out / "pred_vs_truth.png").is_file()

    def test_eval_matches_training_evaluation(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        train_out = train_small(tmp_path, data_path)
        out = tmp_path / "eval"
        run_cli(
            "eval", "--out", str(out),
            "--set", f"dataset={data_path}",
            "--set", f"checkpoint={train_out / 'checkpoint.bin'}",
            "--episode", "in0,in1->t0,t1",
        )
        eval_block = read_report_json(out / "report.json")["results"]["evaluation"]
        train_block = read_report_json(
            train_out / "report.json"
        )["results"]["evaluation"]
        assert eval_block == train_block

    def test_generalize_on_unseen_target(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        train_out = train_small(tmp_path, data_path)
        out = tmp_path / "gener"
        code = run_cli(
            "generalize", "--out", str(out),
            "--set", f"dataset={data_path}",
            "--set", f"checkpoint={train_out / 'checkpoint.bin'}",
            "--episode", "in0->t1",
        )
        assert code == 0
        report = read_report_json(out / "report.json")
        assert report["command"] == "generalize"
        assert "t1" in report["results"]["evaluation"]["metrics"]["targets"]

    def test_config_mismatch_refused(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        train_out = train_small(tmp_path, data_path)
        code = run_cli(
            "eval", "--out", str(tmp_path / "out"),
            "--set", f"dataset={data_path}",
            "--set", f"checkpoint={train_out / 'checkpoint.bin'}",
            "--set", "model.gnn_hidden=64",
            "--episode", "in0->t0",
        )
        assert code == 1

    def test_missing_checkpoint_exits_one(self, tmp_path):
        data_path = gen_dataset(tmp_path)
        code = run_cli(
            "eval", "--out", str(tmp_path / "out"),
            "--set", f"dataset={data_path}", "--episode", "in0->t0",
        )
        assert code == 1


class TestIngest:
    def test_builds_dataset_from_csv(self, tmp_path):
        csv_path = tmp_path / "series.csv"
        rng = np.random.default_rng(0)
        base = rng.normal(size=12)
        lines = ["a,b,c"]
        for i in range(12):
            lines.append(f"{base[i]:.6f},{base[i] * 2:.6f},{rng.normal():.6f}")
        csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        out = tmp_path / "out"
        code = run_cli(
            "ingest", "--csv", str(csv_path), "--out", str(out),
            "--set", "ingest.num_modes=2",
        )
        assert code == 0
        ds = load_dataset(out / "dataset.json")
        assert ds.universe == ("a", "b", "c")
        assert len(ds.mode_ids) == 2

    def test_missing_csv_exits_one(self, tmp_path):
        code = run_cli("ingest", "--csv", str(tmp_path / "none.csv"),
                       "--out", str(tmp_path / "out"))
        assert code == 1

    def test_no_csv_configured_exits_one(self, tmp_path):
        assert run_cli("ingest", "--out", str(tmp_path / "out")) == 1


class TestAuditCommands:
    def test_gradcheck_passes(self, tmp_path, capsys):
        out = tmp_path / "gc"
        code = run_cli("gradcheck", "--out", str(out),
                       "--set", "gradcheck.seeds=[0]")
        assert code == 0
        assert "pass" in capsys.readouterr().out
        report = read_report_json(out / "report.json")
        assert report["results"]["passed"] is True
        assert report["results"]["max_error"] < 1e-4

    def test_gradcheck_impossible_threshold_exits_one(self, tmp_path):
        code = run_cli("gradcheck", "--out", str(tmp_path / "gc"),
                       "--set", "gradcheck.seeds=[0]",
                       "--set", "gradcheck.threshold=1e-300")
        assert code == 1

    def test_paramaudit_counts_agree(self, tmp_path, capsys):
        out = tmp_path / "audit"
        code = run_cli("paramaudit", "--out", str(out),
                       "--set", "audit.mode_counts=[2,3]")
        assert code == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if "trainable" in l]
        assert len(lines) == 2
        report = read_report_json(out / "report.json")
        assert report["results"]["equal"] is True

    def test_theorem1_small_run(self, tmp_path, capsys):
        out = tmp_path / "th"
        code = run_cli(
            "theorem1", "--out", str(out),
            "--set", "theorem1.trials=2", "--set", "theorem1.steps=30",
            "--set", "theorem1.p=6", "--set", "theorem1.n=8",
        )
        assert code == 0
        assert "theorem1:" in capsys.readouterr().out
        assert (out / "theorem1_errors.png").is_file()
        report = read_report_json(out / "report.json")
        assert len(report["results"]["trials"]) == 2


class TestLogging:
    def test_env_var_sets_debug_level(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GRAPHX_LOG", "debug")
        gen_dataset(tmp_path)
        assert logging.getLogger().getEffectiveLevel() == logging.DEBUG

    def test_default_level_is_warning(self, tmp_path, monkeypatch):
        monkeypatch.delenv("GRAPHX_LOG", raising=False)
        gen_dataset(tmp_path)
        assert logging.getLogger().getEffectiveLevel() == logging.WARNING
