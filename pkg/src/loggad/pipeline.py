"""End-to-end iterative training loop.

Each iteration: build the event graph from the current keywords, train the
subgraph annotator (self-supervised pre-training plus voting fine-tuning,
depending on mode), pseudo-label every sequence, train the sequence
classifier on those pseudo labels, re-extract keywords from the
classifier's predictions, and measure keyword drift. The loop stops when
drift falls below the threshold or the iteration cap is hit.

Gold labels never reach any of this: the corpus is stripped of them at the
entry point, so poisoned gold labels cannot change anything before the
evaluation stage.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from loggad import annotator as ann
from loggad import classifier as clf
from loggad import graph as eg
from loggad import walks
from loggad.ingest import LogSequence
from loggad.keywords import (
    ANOMALY,
    NORMAL,
    ClassifiedCorpus,
    KeywordError,
    KeywordSet,
    drift,
    extract_top,
    load_stopwords,
)


class PipelineError(RuntimeError):
    pass


ANNOTATOR_MODES = ("full", "no_selfsup", "counting")
INIT_MODES = ("seeded", "random")


@dataclass
class PipelineConfig:
    keywords_per_class: int = 100  # Z
    idf_exponent: int = 4  # M
    cooccur_window: int = 10
    gin_layers: int = 3
    gin_hidden: int = 64
    annotator_epochs: int = 30
    annotator_batch: int = 20
    finetune_epochs: int = 30
    finetune_margin: float = 0.2  # votes below this decisiveness are not training targets
    finetune_lr: float = 1e-3
    annotator_lr: float = 1e-4
    classifier_epochs: int = 8
    classifier_batch: int = 5
    classifier_lr: float = 1e-3
    embed_dim: int = 32
    classifier_hidden: int = 32
    drift_threshold: float = 0.1
    max_iterations: int = 10
    seed: int = 7
    annotator_mode: str = "full"
    init_mode: str = "seeded"
    seed_keywords: list[str] = field(default_factory=list)
    walk_max_length: int = 64
    directed_edges: bool = False
    stopwords_path: Optional[str] = None

    def __post_init__(self):
        if self.annotator_mode not in ANNOTATOR_MODES:
            raise PipelineError(f"annotator_mode must be one of {ANNOTATOR_MODES}")
        if self.init_mode not in INIT_MODES:
            raise PipelineError(f"init_mode must be one of {INIT_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        return cls(**data)

    @classmethod
    def from_ini(cls, path) -> "PipelineConfig":
        """Key/value config file with sections; keys match field names."""
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise PipelineError(f"config file not found: {path}")
        flat: dict[str, str] = {}
        for section in parser.sections():
            flat.update(parser[section])
        kwargs: dict = {}
        for f, typ in cls.__dataclass_fields__.items():
            if f not in flat:
                continue
            raw = flat[f]
            if f == "seed_keywords":
                kwargs[f] = [w.strip() for w in raw.split(",") if w.strip()]
            elif f == "stopwords_path":
                kwargs[f] = raw
            elif f in ("annotator_mode", "init_mode"):
                kwargs[f] = raw
            elif f == "directed_edges":
                kwargs[f] = raw.strip().lower() in ("1", "true", "yes")
            elif f in ("annotator_lr", "classifier_lr", "drift_threshold", "finetune_margin", "finetune_lr"):
                kwargs[f] = float(raw)
            else:
                kwargs[f] = int(raw)
        unknown = set(flat) - set(cls.__dataclass_fields__)
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)


@dataclass
class IterationRecord:
    iteration: int
    keywords: KeywordSet
    gamma: float
    pseudo_counts: dict[int, int]
    pretrain_trace: list[float]
    finetune_trace: list[float]
    classifier_trace: list[float]
    seconds: float


@dataclass
class PipelineResult:
    classifier: clf.ClassifierModel
    records: list[IterationRecord]
    keywords: KeywordSet
    predictions: list[tuple[str, int, float]]
    pseudo_labels: list[ann.PseudoLabel]
    converged: bool
    final_annotator: Optional[ann.AnnotatorModel] = None


def strip_gold(corpus: list[LogSequence]) -> list[LogSequence]:
    """Firewall: training-path code only ever sees label-free sequences."""
    return [LogSequence(id=s.id, tokens=list(s.tokens), gold_label=None) for s in corpus]


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def bootstrap(
    corpus: list[LogSequence], config: PipelineConfig
) -> tuple[KeywordSet, ClassifiedCorpus]:
    """Initial keyword set and initial class split.

    Seeded mode: the supplied seed keywords define the Anomaly class;
    sequences containing any seed form the initial anomaly split, and the
    Normal keyword list is extracted from the remainder. Random mode:
    a balanced random split, then top keywords from both sides.
    """
    if not corpus:
        raise PipelineError("empty corpus")
    stop = load_stopwords(config.stopwords_path) if config.stopwords_path else None
    if config.init_mode == "seeded":
        seeds = [w.lower() for w in config.seed_keywords]
        if not seeds:
            raise PipelineError("seeded init_mode requires seed_keywords")
        seed_set = set(seeds)
        classified = [
            (seq, ANOMALY if seed_set.intersection(seq.tokens) else NORMAL) for seq in corpus
        ]
        n_hits = sum(1 for _, lbl in classified if lbl == ANOMALY)
        if n_hits == 0:
            raise PipelineError(f"no sequence contains any seed keyword {seeds}")
        if n_hits == len(corpus):
            raise PipelineError("every sequence contains a seed keyword; cannot split")
        from loggad.keywords import score as kw_score

        anomaly_list = sorted(
            ((w, kw_score(w, ANOMALY, classified, config.idf_exponent)) for w in seed_set),
            key=lambda item: (-item[1], item[0]),
        )
        # Initial normal list kept as short as the seed list: symmetric list
        # sizes keep the term-frequency vote unbiased at cold start.
        normal_list = extract_top(
            classified, len(seed_set), config.idf_exponent, stopwords=stop
        ).normal
        keywords = KeywordSet(normal=normal_list, anomaly=anomaly_list, iteration_index=0)
        return keywords, classified
    rng = _rng(config.seed, 0, 0)
    labels = np.zeros(len(corpus), dtype=int)
    labels[rng.permutation(len(corpus))[: len(corpus) // 2]] = 1
    classified = [(seq, int(lbl)) for seq, lbl in zip(corpus, labels)]
    keywords = extract_top(
        classified, config.keywords_per_class, config.idf_exponent, stopwords=stop
    )
    return keywords, classified


def run_iteration(
    corpus: list[LogSequence],
    keywords: KeywordSet,
    config: PipelineConfig,
    iteration: int,
) -> tuple[KeywordSet, IterationRecord, clf.ClassifierModel, list[ann.PseudoLabel], Optional[ann.AnnotatorModel]]:
    """One loop pass: graph, annotator, pseudo labels, classifier, keywords."""
    start = time.perf_counter()
    stop = load_stopwords(config.stopwords_path) if config.stopwords_path else None
    pretrain_trace: list[float] = []
    finetune_trace: list[float] = []
    annotator_model: Optional[ann.AnnotatorModel] = None

    if config.annotator_mode == "counting":
        pseudo = ann.vote_annotate(corpus, keywords)
    else:
        g = eg.build(keywords, corpus, config.cooccur_window, directed=config.directed_edges)
        annotator_model = ann.AnnotatorModel.create(
            in_dim=g.feature_dim,
            rng=_rng(config.seed, iteration, 1),
            n_layers=config.gin_layers,
            hidden=config.gin_hidden,
            vocab_hash=g.vocab_hash,
        )
        if config.annotator_mode == "full":
            length_model = walks.fit_length_model(corpus, keywords, l_max=config.walk_max_length)
            policy = eg.transition_probabilities(g)
            sampler = walks.WalkSampler(g, policy, length_model, _rng(config.seed, iteration, 2))
            steps = config.annotator_epochs * math.ceil(len(corpus) / config.annotator_batch)
            pretrain_trace = ann.pretrain(
                annotator_model,
                sampler,
                steps=steps,
                batch_size=config.annotator_batch,
                lr=config.annotator_lr,
            )
        finetune_trace = ann.finetune(
            annotator_model,
            corpus,
            g,
            keywords,
            epochs=config.finetune_epochs,
            lr=config.finetune_lr,
            batch_size=config.annotator_batch,
            rng=_rng(config.seed, iteration, 3),
            margin=config.finetune_margin,
        )
        pseudo = ann.annotate(annotator_model, corpus, g, keywords)

    classifier = clf.ClassifierModel.create(
        corpus,
        rng=_rng(config.seed, iteration, 4),
        embed_dim=config.embed_dim,
        hidden=config.classifier_hidden,
    )
    classifier_trace = clf.train(
        classifier,
        corpus,
        pseudo,
        epochs=config.classifier_epochs,
        batch_size=config.classifier_batch,
        lr=config.classifier_lr,
        rng=_rng(config.seed, iteration, 5),
    )
    predictions = clf.predict(classifier, corpus)
    pred_by_id = {sid: label for sid, label, _ in predictions}
    classified: ClassifiedCorpus = [(seq, pred_by_id[seq.id]) for seq in corpus]

    new_keywords = extract_top(
        classified,
        config.keywords_per_class,
        config.idf_exponent,
        stopwords=stop,
        iteration_index=iteration,
    )
    gamma = drift(new_keywords, keywords)
    counts = {NORMAL: 0, ANOMALY: 0}
    for pl in pseudo:
        counts[pl.label] += 1
    record = IterationRecord(
        iteration=iteration,
        keywords=new_keywords,
        gamma=gamma,
        pseudo_counts=counts,
        pretrain_trace=pretrain_trace,
        finetune_trace=finetune_trace,
        classifier_trace=classifier_trace,
        seconds=time.perf_counter() - start,
    )
    return new_keywords, record, classifier, pseudo, annotator_model


def run_pipeline(
    corpus: list[LogSequence],
    config: PipelineConfig,
    out_dir: Optional[str | Path] = None,
) -> PipelineResult:
    """Full iterative run; optionally writes a replayable manifest directory."""
    corpus = strip_gold(corpus)
    keywords, _ = bootstrap(corpus, config)
    records: list[IterationRecord] = []
    classifier = None
    pseudo: list[ann.PseudoLabel] = []
    final_annotator = None
    converged = False
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "keywords_000.json").write_text(keywords.to_json() + "\n")

    for iteration in range(1, config.max_iterations + 1):
        try:
            keywords, record, classifier, pseudo, final_annotator = run_iteration(
                corpus, keywords, config, iteration
            )
        except (eg.GraphError, ann.AnnotatorError, clf.ClassifierError, KeywordError) as exc:
            if out is not None:
                (out / "failure.json").write_text(
                    json.dumps({"iteration": iteration, "error": str(exc)}) + "\n"
                )
            raise PipelineError(f"iteration {iteration} failed: {exc}") from exc
        records.append(record)
        if out is not None:
            _write_iteration_artifacts(out, record, pseudo, classifier, corpus)
        if record.gamma < config.drift_threshold:
            converged = True
            break

    assert classifier is not None
    predictions = clf.predict(classifier, corpus)
    result = PipelineResult(
        classifier=classifier,
        records=records,
        keywords=keywords,
        predictions=predictions,
        pseudo_labels=pseudo,
        converged=converged,
        final_annotator=final_annotator,
    )
    if out is not None:
        _write_manifest(out, config, corpus, result)
    return result


def corpus_hash(corpus: list[LogSequence]) -> str:
    """Content hash over ids and tokens only (gold labels excluded)."""
    h = hashlib.sha256()
    for seq in corpus:
        h.update(json.dumps([seq.id, seq.tokens], ensure_ascii=False).encode())
    return h.hexdigest()


def _write_iteration_artifacts(out: Path, record, pseudo, classifier, corpus) -> None:
    k = record.iteration
    (out / f"keywords_{k:03d}.json").write_text(record.keywords.to_json() + "\n")
    with open(out / f"pseudo_labels_{k:03d}.jsonl", "w") as fh:
        for pl in pseudo:
            fh.write(
                json.dumps(
                    {
                        "id": pl.sequence_id,
                        "label": pl.label,
                        "confidence": round(pl.confidence, 12),
                        "flagged": pl.flagged,
                    }
                )
                + "\n"
            )
    with open(out / f"predictions_{k:03d}.jsonl", "w") as fh:
        for sid, label, conf in clf.predict(classifier, corpus):
            fh.write(
                json.dumps({"id": sid, "label": label, "confidence": round(conf, 12)}) + "\n"
            )


def _write_manifest(out: Path, config: PipelineConfig, corpus, result: PipelineResult) -> None:
    from loggad import __version__

    model_dir = out / "model"
    model_dir.mkdir(exist_ok=True)
    result.classifier.save(model_dir / "classifier.npz")
    if result.final_annotator is not None:
        result.final_annotator.save(model_dir / "annotator.npz")
    manifest = {
        "tool_version": __version__,
        "config": config.to_dict(),
        "corpus_hash": corpus_hash(corpus),
        "converged": result.converged,
        "iterations": [
            {
                "iteration": r.iteration,
                "gamma": r.gamma,
                "pseudo_counts": {str(k): v for k, v in r.pseudo_counts.items()},
                "seconds": r.seconds,
                "keywords_path": f"keywords_{r.iteration:03d}.json",
                "pseudo_labels_path": f"pseudo_labels_{r.iteration:03d}.jsonl",
                "predictions_path": f"predictions_{r.iteration:03d}.jsonl",
            }
            for r in result.records
        ],
        "classifier_vocab_hash": result.classifier.vocab_hash,
        "model_dir": "model",
    }
    (out / "config.json").write_text(json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n")
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    tmp.replace(out / "manifest.json")
