"""Compact pluggable sequence classifier trained on pseudo labels.

The default model is deliberately small: a token embedding table, mean
pooling over the sequence, and a 2-layer head producing 2 logits. Mean
pooling makes it order-agnostic, which diverges from an order-aware
transformer but keeps training and gradient checking tractable at desk
scale. Any object with the same train/predict/save/load surface can be
swapped in by the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from loggad import nn
from loggad.annotator import PseudoLabel
from loggad.ingest import LogSequence

UNK = 0  # reserved embedding row


class ClassifierError(ValueError):
    pass


@dataclass
class ClassifierModel:
    params: nn.Params
    vocab: dict[str, int]  # token -> embedding row; row 0 is UNK
    embed_dim: int
    hidden: int

    @classmethod
    def create(
        cls,
        corpus: list[LogSequence],
        rng: np.random.Generator,
        embed_dim: int = 32,
        hidden: int = 32,
    ) -> "ClassifierModel":
        tokens = sorted({tok for seq in corpus for tok in seq.tokens})
        vocab = {tok: i + 1 for i, tok in enumerate(tokens)}
        params: nn.Params = {
            "emb": nn.xavier(rng, len(vocab) + 1, embed_dim),
            "W1": nn.xavier(rng, embed_dim, hidden),
            "b1": np.zeros(hidden),
            "W2": nn.xavier(rng, hidden, 2),
            "b2": np.zeros(2),
        }
        return cls(params=params, vocab=vocab, embed_dim=embed_dim, hidden=hidden)

    @property
    def vocab_hash(self) -> str:
        return nn.vocab_digest(sorted(self.vocab))

    def token_ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.vocab.get(t, UNK) for t in tokens], dtype=np.int64)

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(
            params={k: v.copy() for k, v in self.params.items()},
            vocab=dict(self.vocab),
            embed_dim=self.embed_dim,
            hidden=self.hidden,
        )

    def save(self, path) -> None:
        words = [None] * (len(self.vocab) + 1)
        for tok, i in self.vocab.items():
            words[i] = tok
        nn.save_checkpoint(
            path,
            self.params,
            {
                "kind": "classifier",
                "embed_dim": self.embed_dim,
                "hidden": self.hidden,
                "vocab": words[1:],
                "vocab_hash": self.vocab_hash,
            },
        )

    @classmethod
    def load(cls, path) -> "ClassifierModel":
        params, meta = nn.load_checkpoint(path)
        if meta.get("kind") != "classifier":
            raise ClassifierError(f"not a classifier checkpoint: {meta.get('kind')}")
        vocab = {tok: i + 1 for i, tok in enumerate(meta["vocab"])}
        model = cls(
            params=params, vocab=vocab, embed_dim=meta["embed_dim"], hidden=meta["hidden"]
        )
        if meta["vocab_hash"] != model.vocab_hash:
            raise ClassifierError("checkpoint vocabulary hash mismatch")
        return model


def forward(model: ClassifierModel, tokens: Sequence[str]) -> np.ndarray:
    ids = model.token_ids(tokens)
    x = model.params["emb"][ids].mean(axis=0)
    t = np.tanh(x @ model.params["W1"] + model.params["b1"])
    return t @ model.params["W2"] + model.params["b2"]


def loss_and_grads(
    model: ClassifierModel, tokens: Sequence[str], target: int
) -> tuple[float, nn.Params]:
    p = model.params
    ids = model.token_ids(tokens)
    x = p["emb"][ids].mean(axis=0)
    u = x @ p["W1"] + p["b1"]
    t = np.tanh(u)
    logits = t @ p["W2"] + p["b2"]
    loss, dlogits = nn.cross_entropy(logits, target)

    grads = nn.zeros_like_params(p)
    grads["W2"] = np.outer(t, dlogits)
    grads["b2"] = dlogits.copy()
    dt = p["W2"] @ dlogits
    du = dt * (1.0 - t * t)
    grads["W1"] = np.outer(x, du)
    grads["b1"] = du.copy()
    dx = p["W1"] @ du
    np.add.at(grads["emb"], ids, dx / len(ids))
    return loss, grads


def train(
    model: ClassifierModel,
    corpus: list[LogSequence],
    labels: list[PseudoLabel],
    epochs: int,
    batch_size: int = 5,
    lr: float = 1e-3,
    rng: Optional[np.random.Generator] = None,
) -> list[float]:
    """Adam training against pseudo labels; returns the loss trace.

    Every sequence must have exactly one label; sequences made entirely of
    UNK tokens are excluded from training batches.
    """
    by_id = {pl.sequence_id: pl.label for pl in labels}
    missing = [seq.id for seq in corpus if seq.id not in by_id]
    if missing or len(by_id) != len(corpus):
        raise ClassifierError(
            f"label/corpus mismatch: {len(missing)} sequences unlabeled, "
            f"{len(by_id)} labels for {len(corpus)} sequences"
        )
    examples = [
        (seq.tokens, by_id[seq.id])
        for seq in corpus
        if np.any(model.token_ids(seq.tokens) != UNK)
    ]
    if not examples:
        raise ClassifierError("every sequence is entirely out-of-vocabulary")
    rng = rng or np.random.default_rng(0)
    adam = nn.Adam(model.params, lr=lr, clip_norm=5.0)
    trace: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(examples))
        for start in range(0, len(order), batch_size):
            batch = [examples[i] for i in order[start : start + batch_size]]
            total = nn.zeros_like_params(model.params)
            loss_sum = 0.0
            for tokens, target in batch:
                loss, grads = loss_and_grads(model, tokens, target)
                loss_sum += loss
                nn.accumulate(total, grads, scale=1.0 / len(batch))
            mean_loss = loss_sum / len(batch)
            if not np.isfinite(mean_loss):
                raise nn.TrainingDiverged(
                    f"non-finite classifier loss at step {len(trace)}; lr={lr}"
                )
            trace.append(mean_loss)
            adam.step(total)
    return trace


def predict(
    model: ClassifierModel, corpus: list[LogSequence]
) -> list[tuple[str, int, float]]:
    """(sequence_id, label, confidence) per sequence, deterministic."""
    out = []
    for seq in corpus:
        probs = nn.softmax(forward(model, seq.tokens))
        label = int(np.argmax(probs))
        out.append((seq.id, label, float(probs[label])))
    return out
