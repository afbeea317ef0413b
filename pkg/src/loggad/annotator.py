"""Subgraph annotator: a small sum-aggregation graph network, hand-rolled.

Per layer, each node representation becomes
MLP(sum of neighbor representations + (1 + eps) * own representation)
with a learnable scalar eps per layer; the graph readout concatenates the
per-layer sums of node representations (layer 0 is the raw features) and a
linear head maps that to 2 logits. Forward, backward and the optimizer are
plain numpy; gradients are checked against finite differences in tests.

Training happens in two phases: self-supervised pre-training on random-walk
subgraphs (predict the walk's start class), then fine-tuning on sequence
subgraphs against keyword-count voting labels. The trained model then
pseudo-labels every sequence.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np

from loggad import nn
from loggad.graph import EventGraph, Subgraph, induce_sequence_subgraph
from loggad.ingest import LogSequence
from loggad.keywords import ANOMALY, NORMAL, KeywordSet
from loggad.walks import WalkSampler


class AnnotatorError(ValueError):
    pass


@dataclass
class AnnotatorModel:
    params: nn.Params
    n_layers: int
    hidden: int
    in_dim: int
    vocab_hash: str
    identity_mode: bool = False  # test harness: layers pass aggregation through

    @classmethod
    def create(
        cls,
        in_dim: int,
        rng: np.random.Generator,
        n_layers: int = 3,
        hidden: int = 64,
        vocab_hash: str = "",
        identity_mode: bool = False,
    ) -> "AnnotatorModel":
        params: nn.Params = {}
        d = in_dim
        for k in range(1, n_layers + 1):
            params[f"eps{k}"] = np.zeros(1)
            if not identity_mode:
                params[f"W1_{k}"] = nn.xavier(rng, d, hidden)
                params[f"b1_{k}"] = np.zeros(hidden)
                params[f"W2_{k}"] = nn.xavier(rng, hidden, hidden)
                params[f"b2_{k}"] = np.zeros(hidden)
                d = hidden
        readout_dim = in_dim * (n_layers + 1) if identity_mode else in_dim + n_layers * hidden
        params["head_W"] = nn.xavier(rng, readout_dim, 2)
        params["head_b"] = np.zeros(2)
        return cls(
            params=params,
            n_layers=n_layers,
            hidden=hidden,
            in_dim=in_dim,
            vocab_hash=vocab_hash,
            identity_mode=identity_mode,
        )

    def copy(self) -> "AnnotatorModel":
        return AnnotatorModel(
            params={k: v.copy() for k, v in self.params.items()},
            n_layers=self.n_layers,
            hidden=self.hidden,
            in_dim=self.in_dim,
            vocab_hash=self.vocab_hash,
            identity_mode=self.identity_mode,
        )

    def save(self, path) -> None:
        nn.save_checkpoint(
            path,
            self.params,
            {
                "kind": "annotator",
                "n_layers": self.n_layers,
                "hidden": self.hidden,
                "in_dim": self.in_dim,
                "vocab_hash": self.vocab_hash,
                "identity_mode": self.identity_mode,
            },
        )

    @classmethod
    def load(cls, path) -> "AnnotatorModel":
        params, meta = nn.load_checkpoint(path)
        if meta.get("kind") != "annotator":
            raise AnnotatorError(f"not an annotator checkpoint: {meta.get('kind')}")
        return cls(
            params=params,
            n_layers=meta["n_layers"],
            hidden=meta["hidden"],
            in_dim=meta["in_dim"],
            vocab_hash=meta["vocab_hash"],
            identity_mode=meta["identity_mode"],
        )


@dataclass
class PseudoLabel:
    sequence_id: str
    label: int
    confidence: float
    flagged: bool = False  # fallback path was taken


def node_representations(model: AnnotatorModel, sg: Subgraph) -> list[np.ndarray]:
    """Per-layer node representation matrices R^(0..K). Used by forward
    and exposed for the layer-reduction tests."""
    if sg.is_empty:
        raise AnnotatorError("cannot run the annotator on an empty subgraph")
    X = sg.features
    if X.shape[1] != model.in_dim:
        raise AnnotatorError(
            f"feature width {X.shape[1]} does not match model in_dim {model.in_dim}"
        )
    A = sg.adjacency
    reps = [X]
    for k in range(1, model.n_layers + 1):
        eps = model.params[f"eps{k}"][0]
        Z = A @ reps[-1] + (1.0 + eps) * reps[-1]
        if model.identity_mode:
            reps.append(Z)
        else:
            T = np.tanh(Z @ model.params[f"W1_{k}"] + model.params[f"b1_{k}"])
            reps.append(T @ model.params[f"W2_{k}"] + model.params[f"b2_{k}"])
    return reps


def forward(model: AnnotatorModel, sg: Subgraph) -> np.ndarray:
    """2-class logits for a subgraph."""
    reps = node_representations(model, sg)
    readout = np.concatenate([R.sum(axis=0) for R in reps])
    return readout @ model.params["head_W"] + model.params["head_b"]


def loss_and_grads(
    model: AnnotatorModel, sg: Subgraph, target: int
) -> tuple[float, nn.Params]:
    """Cross-entropy loss and analytic gradients for one (subgraph, class)."""
    if sg.is_empty:
        raise AnnotatorError("cannot train on an empty subgraph")
    X = sg.features
    A = sg.adjacency
    p = model.params
    K = model.n_layers

    reps = [X]
    caches = []
    for k in range(1, K + 1):
        eps = p[f"eps{k}"][0]
        Z = A @ reps[-1] + (1.0 + eps) * reps[-1]
        if model.identity_mode:
            caches.append((Z, None))
            reps.append(Z)
        else:
            T = np.tanh(Z @ p[f"W1_{k}"] + p[f"b1_{k}"])
            R = T @ p[f"W2_{k}"] + p[f"b2_{k}"]
            caches.append((Z, T))
            reps.append(R)
    readout = np.concatenate([R.sum(axis=0) for R in reps])
    logits = readout @ p["head_W"] + p["head_b"]
    loss, dlogits = nn.cross_entropy(logits, target)

    grads = nn.zeros_like_params(p)
    grads["head_W"] = np.outer(readout, dlogits)
    grads["head_b"] = dlogits.copy()
    dreadout = p["head_W"] @ dlogits

    # Split readout gradient back into per-layer row-broadcast gradients.
    dims = [R.shape[1] for R in reps]
    offsets = np.cumsum([0] + dims)
    dreps = [
        np.tile(dreadout[offsets[k] : offsets[k + 1]], (reps[k].shape[0], 1))
        for k in range(K + 1)
    ]

    for k in range(K, 0, -1):
        Z, T = caches[k - 1]
        dR = dreps[k]
        if model.identity_mode:
            dZ = dR
        else:
            grads[f"W2_{k}"] += T.T @ dR
            grads[f"b2_{k}"] += dR.sum(axis=0)
            dT = dR @ p[f"W2_{k}"].T
            dU = dT * (1.0 - T * T)
            grads[f"W1_{k}"] += Z.T @ dU
            grads[f"b1_{k}"] += dU.sum(axis=0)
            dZ = dU @ p[f"W1_{k}"].T
        eps = p[f"eps{k}"][0]
        grads[f"eps{k}"] += np.sum(dZ * reps[k - 1])
        dreps[k - 1] = dreps[k - 1] + A.T @ dZ + (1.0 + eps) * dZ
    return loss, grads


def _train_batches(
    model: AnnotatorModel,
    batches,
    lr: float,
    loss_trace: list[float],
) -> None:
    adam = nn.Adam(model.params, lr=lr, clip_norm=5.0)
    for batch in batches:
        total = nn.zeros_like_params(model.params)
        loss_sum = 0.0
        for sg, target in batch:
            loss, grads = loss_and_grads(model, sg, target)
            loss_sum += loss
            nn.accumulate(total, grads, scale=1.0 / len(batch))
        mean_loss = loss_sum / len(batch)
        if not np.isfinite(mean_loss):
            raise nn.TrainingDiverged(
                f"non-finite annotator loss {mean_loss} at step {len(loss_trace)}; "
                f"lr={lr} may be too large or gradients exploded"
            )
        loss_trace.append(mean_loss)
        adam.step(total)


def pretrain(
    model: AnnotatorModel,
    sampler: WalkSampler,
    steps: int,
    batch_size: int = 20,
    lr: float = 1e-4,
) -> list[float]:
    """Self-supervised pre-training: predict the start class of walks.

    Mutates the model in place and returns the loss trace. 0 steps leave
    the model unchanged.
    """

    def batches():
        for _ in range(steps):
            yield [
                (s.subgraph, s.start_class)
                for s in sampler.sample_batch(batch_size)
                if not s.subgraph.is_empty
            ]

    trace: list[float] = []
    _train_batches(model, batches(), lr, trace)
    return trace


def vote_label(seq: LogSequence, keywords: KeywordSet) -> Optional[int]:
    """Keyword term-frequency vote: argmax over class keyword lists.

    Returns None (abstain) when the sequence contains no keyword at all;
    ties break toward Normal.
    """
    counts = Counter(seq.tokens)
    sums = {
        NORMAL: sum(counts[w] for w in keywords.class_words(NORMAL)),
        ANOMALY: sum(counts[w] for w in keywords.class_words(ANOMALY)),
    }
    if sums[NORMAL] == 0 and sums[ANOMALY] == 0:
        return None
    return ANOMALY if sums[ANOMALY] > sums[NORMAL] else NORMAL


def vote_margin(seq: LogSequence, keywords: KeywordSet) -> float:
    """Decisiveness of the keyword vote: |A - N| / (A + N), 0 on abstain."""
    counts = Counter(seq.tokens)
    a = sum(counts[w] for w in keywords.class_words(ANOMALY))
    n = sum(counts[w] for w in keywords.class_words(NORMAL))
    if a + n == 0:
        return 0.0
    return abs(a - n) / (a + n)


def vote_annotate(corpus: list[LogSequence], keywords: KeywordSet) -> list[PseudoLabel]:
    """Pseudo-label by keyword counting alone (no graph model).

    Confidence is the winning class's share of keyword hits; abstentions
    fall back to Normal at 0.5 and are flagged.
    """
    labels = []
    for seq in corpus:
        counts = Counter(seq.tokens)
        sums = {
            NORMAL: sum(counts[w] for w in keywords.class_words(NORMAL)),
            ANOMALY: sum(counts[w] for w in keywords.class_words(ANOMALY)),
        }
        total = sums[NORMAL] + sums[ANOMALY]
        if total == 0:
            labels.append(PseudoLabel(seq.id, NORMAL, 0.5, flagged=True))
            continue
        label = ANOMALY if sums[ANOMALY] > sums[NORMAL] else NORMAL
        labels.append(PseudoLabel(seq.id, label, sums[label] / total))
    return labels


def finetune(
    model: AnnotatorModel,
    corpus: list[LogSequence],
    graph: EventGraph,
    keywords: KeywordSet,
    epochs: int,
    lr: float = 1e-4,
    batch_size: int = 20,
    rng: Optional[np.random.Generator] = None,
    margin: float = 0.0,
) -> list[float]:
    """Fine-tune on sequence subgraphs against voting labels.

    Abstaining sequences (no keywords, hence empty subgraphs) are skipped,
    and so is every sequence whose vote is not decisive (margin below the
    threshold): ambiguous votes are exactly the ones the annotator exists
    to overrule, so they must not be baked in as training targets.
    Mutates the model in place and returns the loss trace.
    """
    _check_graph_match(model, graph)
    if not 0.0 <= margin < 1.0:
        raise AnnotatorError(f"margin must be in [0, 1), got {margin}")
    pairs = []
    for seq in corpus:
        label = vote_label(seq, keywords)
        if label is None or vote_margin(seq, keywords) < margin:
            continue
        sg = induce_sequence_subgraph(graph, seq)
        if sg.is_empty:
            continue
        pairs.append((sg, label))
    if not pairs:
        raise AnnotatorError(
            "no decisive votes to fine-tune on: keyword set does not cover "
            "the corpus or the margin threshold is too strict"
        )
    rng = rng or np.random.default_rng(0)

    def batches():
        for _ in range(epochs):
            order = rng.permutation(len(pairs))
            for start in range(0, len(order), batch_size):
                yield [pairs[i] for i in order[start : start + batch_size]]

    trace: list[float] = []
    _train_batches(model, batches(), lr, trace)
    return trace


def annotate(
    model: AnnotatorModel,
    corpus: list[LogSequence],
    graph: EventGraph,
    keywords: KeywordSet,
) -> list[PseudoLabel]:
    """Pseudo-label every sequence.

    Sequences with empty subgraphs fall back to the keyword vote; if that
    abstains too, they get Normal with confidence 0.5. Both fallbacks are
    flagged.
    """
    _check_graph_match(model, graph)
    labels = []
    for seq in corpus:
        sg = induce_sequence_subgraph(graph, seq)
        if sg.is_empty:
            vote = vote_label(seq, keywords)
            if vote is None:
                labels.append(PseudoLabel(seq.id, NORMAL, 0.5, flagged=True))
            else:
                labels.append(PseudoLabel(seq.id, vote, 0.5, flagged=True))
            continue
        logits = forward(model, sg)
        probs = nn.softmax(logits)
        label = int(np.argmax(probs))
        labels.append(PseudoLabel(seq.id, label, float(probs[label])))
    return labels


def _check_graph_match(model: AnnotatorModel, graph: EventGraph) -> None:
    if model.vocab_hash and model.vocab_hash != graph.vocab_hash:
        raise AnnotatorError(
            "annotator was trained against a different graph vocabulary "
            f"({model.vocab_hash[:12]} != {graph.vocab_hash[:12]})"
        )
