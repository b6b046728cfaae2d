import json
import os
from pathlib import Path

import pytest

from topoterm.cli import (
    PipelineConfig,
    PipelineError,
    _parse_config_text,
    load_config,
    main,
    run_oracle_check,
)

from conftest import write_synthetic_workspace


class TestConfigParsing:
    def test_sections_and_json_values(self):
        doc = _parse_config_text(
            'seed = 3\n[paths]\ntrain_corpus = "a.jsonl"\n'
            "[models]\nkinds = [\"mlm\", \"pimage\"]\n"
        )
        assert doc["seed"] == 3
        assert doc["paths"]["train_corpus"] == "a.jsonl"
        assert doc["models"]["kinds"] == ["mlm", "pimage"]

    def test_comments_and_blank_lines(self):
        doc = _parse_config_text(
            "# header comment\n\nx = 1  # trailing\ns = \"a # not a comment\"\n"
        )
        assert doc == {"x": 1, "s": "a # not a comment"}

    def test_dotted_section(self):
        doc = _parse_config_text("[a.b]\nx = true\n")
        assert doc == {"a": {"b": {"x": True}}}

    def test_bad_line_reports_number(self):
        with pytest.raises(PipelineError, match="line 2"):
            _parse_config_text("x = 1\nnot a pair\n")
        with pytest.raises(PipelineError, match="line 1"):
            _parse_config_text("x = nope\n")

    def test_load_config_roundtrip(self, tmp_path):
        path = write_synthetic_workspace(tmp_path)
        cfg = load_config(path)
        assert cfg.seed == 13
        assert cfg.deterministic is True
        assert cfg.kinds == ["mlm"]
        assert cfg.neighborhood_n == 41
        assert cfg.training.epochs == 2
        assert cfg.training.batch_size == 8
        cfg.validate()

    def test_cache_dir_env_override(self, tmp_path, monkeypatch):
        path = write_synthetic_workspace(tmp_path)
        monkeypatch.setenv("TOPOTERM_CACHE_DIR", str(tmp_path / "elsewhere"))
        cfg = load_config(path)
        assert cfg.cache_dir == str(tmp_path / "elsewhere")

    def test_validate_rejects_small_neighborhood(self, tmp_path):
        path = write_synthetic_workspace(tmp_path)
        cfg = load_config(path)
        cfg.neighborhood_n = 40
        with pytest.raises(PipelineError, match=">= 41"):
            cfg.validate()

    def test_validate_rejects_missing_path(self, tmp_path):
        path = write_synthetic_workspace(tmp_path)
        cfg = load_config(path)
        cfg.embeddings = str(tmp_path / "nope.tsv")
        with pytest.raises(PipelineError, match="nope.tsv"):
            cfg.validate()

    def test_validate_rejects_unknown_kind(self, tmp_path):
        path = write_synthetic_workspace(tmp_path)
        cfg = load_config(path)
        cfg.kinds = ["mlm", "bogus"]
        with pytest.raises(PipelineError, match="bogus"):
            cfg.validate()


class TestPipeline:
    def run_all(self, config_path):
        for stage in ("ingest", "features", "train", "tag", "eval"):
            assert main([stage, "--config", config_path]) == 0

    def test_end_to_end(self, tmp_path, capsys):
        config_path = write_synthetic_workspace(tmp_path)
        self.run_all(config_path)
        out = tmp_path / "output"
        for name in (
            "gold_train.json",
            "gold_test.json",
            "ingest_summary.json",
            "model_mlm.ckpt",
            "predictions_mlm.jsonl",
            "terms_mlm.json",
            "terms_union.json",
            "report.json",
            "report.txt",
            "per_domain_recall.csv",
        ):
            assert (out / name).exists(), name
        cache = tmp_path / "cache"
        for name in ("features.jsonl", "diagrams.jsonl", "mlm_scores.tsv"):
            assert (cache / name).exists(), name

        report = json.loads((out / "report.json").read_text())
        assert set(report["models"]) >= {"mlm", "union"}
        stats = report["models"]["mlm"]
        assert 0.0 <= stats["recall"] <= 1.0
        assert stats["l2_uncertainty"] is not None

        assert main(["report", "--config", config_path]) == 0
        assert "mlm" in capsys.readouterr().out

    def test_stage_cache_hit_skips_work(self, tmp_path):
        config_path = write_synthetic_workspace(tmp_path)
        assert main(["ingest", "--config", config_path]) == 0
        assert main(["features", "--config", config_path]) == 0
        feat = tmp_path / "cache" / "features.jsonl"
        before = feat.stat().st_mtime_ns
        assert main(["features", "--config", config_path]) == 0
        assert feat.stat().st_mtime_ns == before  # untouched on cache hit

    def test_stage_force_recomputes(self, tmp_path):
        config_path = write_synthetic_workspace(tmp_path)
        assert main(["ingest", "--config", config_path]) == 0
        assert main(["features", "--config", config_path]) == 0
        feat = tmp_path / "cache" / "features.jsonl"
        before = feat.stat().st_mtime_ns
        assert main(["features", "--config", config_path, "--stage-force"]) == 0
        assert feat.stat().st_mtime_ns > before

    def test_input_change_invalidates_stamp(self, tmp_path):
        config_path = write_synthetic_workspace(tmp_path)
        assert main(["ingest", "--config", config_path]) == 0
        summary = tmp_path / "output" / "ingest_summary.json"
        before = summary.stat().st_mtime_ns
        train = tmp_path / "train.jsonl"
        train.write_text(train.read_text() )  # identical content: still a hit
        assert main(["ingest", "--config", config_path]) == 0
        assert summary.stat().st_mtime_ns == before
        with open(train, "a", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {
                        "utt_id": "trX",
                        "dialogue_id": "dX",
                        "speaker": "user",
                        "tokens": ["filler00"],
                        "spans": [],
                    }
                )
                + "\n"
            )
        assert main(["ingest", "--config", config_path]) == 0
        assert summary.stat().st_mtime_ns > before

    def test_stage_ordering_errors(self, tmp_path):
        config_path = write_synthetic_workspace(tmp_path)
        assert main(["train", "--config", config_path]) == 2  # no feature cache yet
        assert main(["ingest", "--config", config_path]) == 0
        assert main(["features", "--config", config_path]) == 0
        assert main(["tag", "--config", config_path]) == 2  # no checkpoint yet
        assert main(["eval", "--config", config_path]) == 2  # no predictions yet

    def test_missing_config_flag(self):
        with pytest.raises(SystemExit):
            main(["ingest"])

    def test_seed_override_changes_train_hash(self, tmp_path):
        config_path = write_synthetic_workspace(tmp_path)
        assert main(["ingest", "--config", config_path]) == 0
        assert main(["features", "--config", config_path]) == 0
        assert main(["train", "--config", config_path]) == 0
        ckpt = tmp_path / "output" / "model_mlm.ckpt"
        first = ckpt.read_bytes()
        assert main(["train", "--config", config_path, "--seed", "99"]) == 0
        assert ckpt.read_bytes() != first


def test_oracle_check_passes():
    assert run_oracle_check(seed=3) == 0


def test_oracle_check_cli_entry():
    assert main(["oracle-check", "--seed", "1"]) == 0
