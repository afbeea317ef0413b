"""Pipeline loop: bootstrap, iteration mechanics, artifacts and the gold firewall."""

import json
from pathlib import Path

import numpy as np
import pytest

from loggad import evaluation as ev
from loggad import pipeline as pl
from loggad.ingest import LogSequence
from loggad.keywords import ANOMALY, NORMAL
from loggad.pipeline import (
    PipelineConfig,
    PipelineError,
    bootstrap,
    corpus_hash,
    run_pipeline,
    strip_gold,
)


def tiny_corpus(n=120, seed=5, noise=0.0):
    spec = ev.SyntheticSpec(
        n_sequences=n,
        anomaly_rate=0.15,
        noise_rate=noise,
        seed=seed,
        n_normal_templates=6,
        n_anomaly_templates=3,
        n_communities=3,
        anomaly_token_rate=0.7,
        normal_vocab=[f"svc{i}_ok" for i in range(30)],
        anomaly_vocab=[f"fault{i}_trap" for i in range(6)],
        shared_vocab=[f"node{i}" for i in range(20)],
    )
    return ev.generate_synthetic(spec), spec


def fast_config(**kw):
    defaults = dict(
        keywords_per_class=20,
        annotator_mode="counting",
        annotator_epochs=1,
        finetune_epochs=1,
        classifier_epochs=10,
        max_iterations=3,
        seed=11,
        seed_keywords=["fault0_trap", "fault1_trap"],
    )
    defaults.update(kw)
    return PipelineConfig(**defaults)


class TestConfig:
    def test_bad_mode_rejected(self):
        with pytest.raises(PipelineError):
            PipelineConfig(annotator_mode="votes")

    def test_bad_init_rejected(self):
        with pytest.raises(PipelineError):
            PipelineConfig(init_mode="warm")

    def test_dict_round_trip(self):
        cfg = fast_config()
        assert PipelineConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_ini(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(
            "[pipeline]\n"
            "keywords_per_class = 50\n"
            "annotator_lr = 0.001\n"
            "annotator_mode = counting\n"
            "seed_keywords = failed, denied\n"
            "directed_edges = true\n"
        )
        cfg = PipelineConfig.from_ini(path)
        assert cfg.keywords_per_class == 50
        assert cfg.annotator_lr == pytest.approx(1e-3)
        assert cfg.annotator_mode == "counting"
        assert cfg.seed_keywords == ["failed", "denied"]
        assert cfg.directed_edges is True
        # untouched fields keep their defaults
        assert cfg.idf_exponent == 4

    def test_from_ini_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[pipeline]\nlearning_rate = 0.1\n")
        with pytest.raises(PipelineError):
            PipelineConfig.from_ini(path)

    def test_from_ini_missing_file_rejected(self, tmp_path):
        with pytest.raises(PipelineError):
            PipelineConfig.from_ini(tmp_path / "absent.ini")


class TestStripGold:
    def test_removes_labels_keeps_content(self):
        corpus = [LogSequence(id="a", tokens=["x"], gold_label=1)]
        stripped = strip_gold(corpus)
        assert stripped[0].gold_label is None
        assert stripped[0].id == "a" and stripped[0].tokens == ["x"]

    def test_hash_ignores_gold(self):
        a = [LogSequence(id="a", tokens=["x"], gold_label=1)]
        b = [LogSequence(id="a", tokens=["x"], gold_label=0)]
        assert corpus_hash(a) == corpus_hash(b)


class TestBootstrap:
    def test_seeded_anomaly_list_is_exactly_seeds(self):
        corpus, spec = tiny_corpus()
        cfg = fast_config()
        keywords, classified = bootstrap(strip_gold(corpus), cfg)
        assert sorted(w for w, _ in keywords.anomaly) == sorted(cfg.seed_keywords)
        assert keywords.iteration_index == 0
        assert len(keywords.normal) == len(keywords.anomaly)

    def test_seeded_split_marks_seed_sequences(self):
        corpus, _ = tiny_corpus()
        cfg = fast_config()
        _, classified = bootstrap(strip_gold(corpus), cfg)
        seeds = set(cfg.seed_keywords)
        for seq, label in classified:
            assert label == (ANOMALY if seeds & set(seq.tokens) else NORMAL)

    def test_seeded_requires_seeds(self):
        corpus, _ = tiny_corpus()
        with pytest.raises(PipelineError):
            bootstrap(strip_gold(corpus), fast_config(seed_keywords=[]))

    def test_seed_without_hits_rejected(self):
        corpus, _ = tiny_corpus()
        with pytest.raises(PipelineError):
            bootstrap(strip_gold(corpus), fast_config(seed_keywords=["nonexistent_word"]))

    def test_empty_corpus_rejected(self):
        with pytest.raises(PipelineError):
            bootstrap([], fast_config())

    def test_random_init_balanced(self):
        corpus, _ = tiny_corpus()
        cfg = fast_config(init_mode="random", seed_keywords=[])
        keywords, classified = bootstrap(strip_gold(corpus), cfg)
        ones = sum(lbl for _, lbl in classified)
        assert ones == len(corpus) // 2
        assert len(keywords.anomaly) > 0 and len(keywords.normal) > 0


class TestRunPipeline:
    def test_converges_and_reports_gammas(self):
        corpus, _ = tiny_corpus()
        result = run_pipeline(corpus, fast_config(max_iterations=5))
        assert 1 <= len(result.records) <= 5
        for rec in result.records:
            assert 0.0 <= rec.gamma <= 1.0
        assert len(result.predictions) == len(corpus)

    def test_max_iterations_cap(self):
        corpus, _ = tiny_corpus()
        # an impossible threshold forces the cap
        cfg = fast_config(max_iterations=2, drift_threshold=-1.0)
        result = run_pipeline(corpus, cfg)
        assert len(result.records) == 2
        assert not result.converged

    def test_permissive_threshold_stops_first_iteration(self):
        corpus, _ = tiny_corpus()
        cfg = fast_config(drift_threshold=1.01)
        result = run_pipeline(corpus, cfg)
        assert len(result.records) == 1
        assert result.converged

    def test_counting_mode_has_no_annotator(self):
        corpus, _ = tiny_corpus()
        result = run_pipeline(corpus, fast_config())
        assert result.final_annotator is None
        assert all(r.pretrain_trace == [] and r.finetune_trace == [] for r in result.records)

    def test_full_mode_trains_annotator(self):
        corpus, _ = tiny_corpus()
        cfg = fast_config(annotator_mode="full", max_iterations=1, gin_hidden=8)
        result = run_pipeline(corpus, cfg)
        assert result.final_annotator is not None
        assert len(result.records[0].pretrain_trace) > 0
        assert len(result.records[0].finetune_trace) > 0

    def test_no_selfsup_skips_pretraining(self):
        corpus, _ = tiny_corpus()
        cfg = fast_config(annotator_mode="no_selfsup", max_iterations=1, gin_hidden=8)
        result = run_pipeline(corpus, cfg)
        assert result.records[0].pretrain_trace == []
        assert len(result.records[0].finetune_trace) > 0


class TestDeterminism:
    def run_once(self, tmp_path, name, corpus, cfg):
        out = tmp_path / name
        run_pipeline(corpus, cfg, out_dir=out)
        return out

    def artifact_bytes(self, out: Path) -> dict[str, bytes]:
        skip = {"manifest.json"}  # contains wall-clock seconds
        return {
            p.name: p.read_bytes()
            for p in sorted(out.rglob("*"))
            if p.is_file() and p.name not in skip
        }

    def test_byte_identical_artifacts(self, tmp_path):
        corpus, _ = tiny_corpus()
        cfg = fast_config()
        a = self.run_once(tmp_path, "a", corpus, cfg)
        b = self.run_once(tmp_path, "b", corpus, cfg)
        assert self.artifact_bytes(a) == self.artifact_bytes(b)

    def test_seed_changes_random_init_run(self, tmp_path):
        # seed 6: the random 50/50 bootstrap needs a corpus where neither
        # run collapses to all-Normal predictions
        corpus, _ = tiny_corpus(seed=6)
        r1 = run_pipeline(corpus, fast_config(init_mode="random", seed_keywords=[], seed=1))
        r2 = run_pipeline(corpus, fast_config(init_mode="random", seed_keywords=[], seed=2))
        k1 = [w for w, _ in r1.records[0].keywords.anomaly]
        k2 = [w for w, _ in r2.records[0].keywords.anomaly]
        assert k1 != k2 or r1.predictions != r2.predictions


class TestGoldFirewall:
    def test_poisoned_gold_changes_nothing(self, tmp_path):
        corpus, _ = tiny_corpus()
        poisoned = [
            LogSequence(id=s.id, tokens=list(s.tokens), gold_label=1 - (s.gold_label or 0))
            for s in corpus
        ]
        cfg = fast_config()
        out_clean = tmp_path / "clean"
        out_poisoned = tmp_path / "poisoned"
        r1 = run_pipeline(corpus, cfg, out_dir=out_clean)
        r2 = run_pipeline(poisoned, cfg, out_dir=out_poisoned)
        assert r1.predictions == r2.predictions
        assert [w for w, _ in r1.keywords.anomaly] == [w for w, _ in r2.keywords.anomaly]
        td = TestDeterminism()
        assert td.artifact_bytes(out_clean) == td.artifact_bytes(out_poisoned)

    def test_training_modules_never_touch_gold(self):
        # static audit: the training-path sources must not reference gold
        # labels anywhere; only ingest (carrying them) and evaluation
        # (scoring them) may.
        import loggad

        root = Path(loggad.__file__).parent
        for mod in ("keywords", "graph", "walks", "nn", "annotator", "classifier"):
            text = (root / f"{mod}.py").read_text()
            assert "gold_label" not in text, f"{mod}.py references gold_label"
        pipeline_text = (root / "pipeline.py").read_text()
        # pipeline may mention it only in the strip_gold firewall itself
        body = pipeline_text.replace(
            'return [LogSequence(id=s.id, tokens=list(s.tokens), gold_label=None) for s in corpus]',
            "",
        )
        assert body.count("gold_label") <= 1  # the docstring mention at most


class TestArtifacts:
    def test_manifest_and_iteration_files(self, tmp_path):
        corpus, _ = tiny_corpus()
        out = tmp_path / "run"
        result = run_pipeline(corpus, fast_config(), out_dir=out)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["corpus_hash"] == corpus_hash(strip_gold(corpus))
        assert manifest["converged"] == result.converged
        assert len(manifest["iterations"]) == len(result.records)
        assert (out / "keywords_000.json").exists()
        for entry in manifest["iterations"]:
            for key in ("keywords_path", "pseudo_labels_path", "predictions_path"):
                assert (out / entry[key]).exists()
        assert (out / "model" / "classifier.npz").exists()
        cfg_json = json.loads((out / "config.json").read_text())
        assert cfg_json == fast_config().to_dict()

    def test_pseudo_label_files_parse(self, tmp_path):
        corpus, _ = tiny_corpus()
        out = tmp_path / "run"
        run_pipeline(corpus, fast_config(max_iterations=1, drift_threshold=1.01), out_dir=out)
        lines = (out / "pseudo_labels_001.jsonl").read_text().splitlines()
        assert len(lines) == len(corpus)
        row = json.loads(lines[0])
        assert set(row) == {"id", "label", "confidence", "flagged"}
