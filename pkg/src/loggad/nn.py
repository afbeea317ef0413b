"""Minimal numeric kernel shared by the two trainable models.

Everything runs in float64. No autodiff: each model supplies its own
analytic gradients, verified against finite differences in the test suite.
"""

from __future__ import annotations

import hashlib
import json
from typing import Dict

import numpy as np

Params = Dict[str, np.ndarray]


class TrainingDiverged(RuntimeError):
    pass


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def cross_entropy(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Loss and d(loss)/d(logits) for a single 2-class example."""
    p = softmax(logits)
    loss = -float(np.log(max(p[target], 1e-300)))
    dlogits = p.copy()
    dlogits[target] -= 1.0
    return loss, dlogits


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    scale = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, scale, size=(fan_in, fan_out))


def clip_global_norm(grads: Params, max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def accumulate(into: Params, grads: Params, scale: float = 1.0) -> None:
    for k, g in grads.items():
        into[k] += scale * g


class Adam:
    """Adam with optional global-norm gradient clipping."""

    def __init__(
        self,
        params: Params,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: float | None = 5.0,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)

    def step(self, grads: Params) -> None:
        if self.clip_norm is not None:
            clip_global_norm(grads, self.clip_norm)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction = np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p -= self.lr * correction * self.m[k] / (np.sqrt(self.v[k]) + self.eps)


def save_checkpoint(path, params: Params, meta: dict) -> None:
    """Write parameters plus JSON metadata; float64 arrays round-trip exactly."""
    arrays = {f"param__{k}": v for k, v in params.items()}
    arrays["__meta__"] = np.frombuffer(
        json.dumps({"format_version": 1, **meta}, sort_keys=True).encode(), dtype=np.uint8
    )
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[Params, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != 1:
            raise ValueError(f"unsupported checkpoint format: {meta.get('format_version')}")
        params = {
            k[len("param__") :]: data[k].copy() for k in data.files if k.startswith("param__")
        }
    return params, meta


def vocab_digest(items) -> str:
    """Stable hash identifying a vocabulary (or any ordered word list)."""
    payload = json.dumps(list(items), ensure_ascii=False).encode()
    return hashlib.sha256(payload).hexdigest()
