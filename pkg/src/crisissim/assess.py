"""Situation assessment: text classification into hazard classes and alerting.

Text is featurized with a hashed bag of words: lowercase, split on
non-alphanumerics, each token hashed with FNV-1a (32-bit, offset basis
2166136261, prime 16777619, over UTF-8 bytes) modulo 16384, term-frequency
weighted and L2-normalized. The hash is fully specified so vectors are
identical across runs and platforms.

The classifier is multinomial logistic regression over the four hazard
classes plus None, trained by mini-batch gradient descent with decoupled
weight decay (beta1=0.9, beta2=0.999, eps=1e-8, decay 0.01). The default base
learning rate of 2e-5 is kept for configuration fidelity but is freely
overridable; it is conservative for a linear model, so callers that need
fast convergence typically raise it. Records split 70/15/15 into
train/val/test and the checkpoint with the best validation accuracy wins.

An alert is emitted when the predicted class is a real hazard and its softmax
confidence clears the threshold (default 0.7; raising it trades alert count
against false alarms).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from ._validation import check_is_fitted, check_random_state
from .nn import Adam, log_softmax, softmax
from .scenario import Category, TweetRecord

__all__ = [
    "FEATURE_DIM",
    "CLASS_ORDER",
    "Alert",
    "TrainConfig",
    "fnv1a32",
    "featurize",
    "featurize_batch",
    "ce_loss_and_grad",
    "TextClassifier",
    "maybe_alert",
    "DegenerateDataError",
]

FEATURE_DIM = 16384
CLASS_ORDER = (Category.WILDFIRE, Category.SEVERE_STORM, Category.HURRICANE,
               Category.FLOOD, Category.NONE)

_TOKEN_RE = re.compile(r"[0-9a-z]+")

_FNV_OFFSET = 2166136261
_FNV_PRIME = 16777619
_MASK32 = 0xFFFFFFFF


class DegenerateDataError(ValueError):
    """Training data contains fewer than two classes."""


def fnv1a32(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK32
    return h


def featurize(text: str, dim: int = FEATURE_DIM) -> sp.csr_matrix:
    """One L2-normalized hashed term-frequency row vector (1 x dim)."""
    counts: dict[int, float] = {}
    for tok in _TOKEN_RE.findall(text.lower()):
        idx = fnv1a32(tok) % dim
        counts[idx] = counts.get(idx, 0.0) + 1.0
    if not counts:
        return sp.csr_matrix((1, dim))
    idxs = sorted(counts)
    vals = np.array([counts[i] for i in idxs])
    vals = vals / np.linalg.norm(vals)
    return sp.csr_matrix((vals, ([0] * len(idxs), idxs)), shape=(1, dim))


def featurize_batch(texts, dim: int = FEATURE_DIM) -> sp.csr_matrix:
    return sp.vstack([featurize(t, dim) for t in texts], format="csr")


def ce_loss_and_grad(w: np.ndarray, b: np.ndarray, x, y: np.ndarray
                     ) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over a batch and its gradients wrt (w, b).

    ``x`` is (n, d) dense or CSR, ``w`` is (c, d), ``y`` holds class indices.
    Weight decay stays out of this loss (it is decoupled in the optimizer).
    """
    n = x.shape[0]
    logits = np.asarray(x @ w.T) + b
    logp = log_softmax(logits, axis=1)
    loss = -float(logp[np.arange(n), y].mean())
    p = np.exp(logp)
    p[np.arange(n), y] -= 1.0
    p /= n
    grad_w = np.asarray(p.T @ x)
    grad_b = p.sum(axis=0)
    return loss, grad_w, grad_b


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 32
    epochs: int = 30
    weight_decay: float = 0.01
    train_frac: float = 0.70
    val_frac: float = 0.15


@dataclass(frozen=True)
class Alert:
    alert_id: str
    source_ref: str
    predicted_class: Category
    confidence: float
    created_time: float

    def __post_init__(self):
        if self.predicted_class == Category.NONE:
            raise ValueError("alerts must name a hazard class")


class TextClassifier(BaseEstimator):
    """Multinomial logistic regression over hashed text features."""

    CHECKPOINT_VERSION = 1

    def __init__(self, dim: int = FEATURE_DIM, confidence_threshold: float = 0.7,
                 config: TrainConfig = TrainConfig(), seed: int = 0):
        self.dim = dim
        self.confidence_threshold = confidence_threshold
        self.config = config
        self.seed = seed
        self.w_: np.ndarray | None = None
        self.b_: np.ndarray | None = None

    @property
    def classes(self) -> tuple[Category, ...]:
        return CLASS_ORDER

    def fit(self, records: list[TweetRecord]) -> "TextClassifier":
        cfg = self.config
        labels = np.array([CLASS_ORDER.index(r.label) for r in records])
        if len(set(labels.tolist())) < 2:
            raise DegenerateDataError("need at least two classes to train")

        rng = check_random_state(self.seed)
        order = rng.permutation(len(records))
        n_train = int(round(len(records) * cfg.train_frac))
        n_val = int(round(len(records) * cfg.val_frac))
        idx_train = order[:n_train]
        idx_val = order[n_train:n_train + n_val]
        idx_test = order[n_train + n_val:]

        x = featurize_batch([r.text for r in records], self.dim)
        y = labels
        c = len(CLASS_ORDER)

        w = np.zeros((c, self.dim))
        b = np.zeros(c)
        opt = Adam(lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
        best_acc = -1.0
        best = (w.copy(), b.copy())
        curve = []
        for _ in range(cfg.epochs):
            perm = rng.permutation(idx_train)
            for start in range(0, len(perm), cfg.batch_size):
                batch = perm[start:start + cfg.batch_size]
                _, gw, gb = ce_loss_and_grad(w, b, x[batch], y[batch])
                flat = opt.step(np.concatenate([w.ravel(), b]),
                                np.concatenate([gw.ravel(), gb]))
                w = flat[:c * self.dim].reshape(c, self.dim)
                b = flat[c * self.dim:]
            val_acc = self._accuracy(w, b, x[idx_val], y[idx_val]) if len(idx_val) else 0.0
            curve.append(val_acc)
            if val_acc > best_acc:
                best_acc = val_acc
                best = (w.copy(), b.copy())
        self.w_, self.b_ = best
        self.val_accuracy_ = best_acc
        self.val_curve_ = curve
        self.test_accuracy_ = (
            self._accuracy(self.w_, self.b_, x[idx_test], y[idx_test])
            if len(idx_test) else float("nan"))
        return self

    @staticmethod
    def _accuracy(w, b, x, y) -> float:
        logits = np.asarray(x @ w.T) + b
        return float((logits.argmax(axis=1) == y).mean())

    def predict_proba(self, texts) -> np.ndarray:
        check_is_fitted(self, "w_")
        x = featurize_batch(texts, self.dim)
        return softmax(np.asarray(x @ self.w_.T) + self.b_, axis=1)

    def predict(self, texts) -> list[Category]:
        p = self.predict_proba(texts)
        return [CLASS_ORDER[i] for i in p.argmax(axis=1)]

    def assess(self, text: str) -> tuple[Category, float]:
        p = self.predict_proba([text])[0]
        i = int(p.argmax())
        return CLASS_ORDER[i], float(p[i])

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        check_is_fitted(self, "w_")
        np.savez_compressed(
            path,
            version=np.array([self.CHECKPOINT_VERSION]),
            dim=np.array([self.dim]),
            classes=np.array([c.value for c in CLASS_ORDER]),
            threshold=np.array([self.confidence_threshold]),
            w=self.w_, b=self.b_,
        )

    @classmethod
    def load(cls, path) -> "TextClassifier":
        data = np.load(path, allow_pickle=False)
        if int(data["version"][0]) != cls.CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data['version'][0]}")
        clf = cls(dim=int(data["dim"][0]),
                  confidence_threshold=float(data["threshold"][0]))
        stored = [str(c) for c in data["classes"]]
        if stored != [c.value for c in CLASS_ORDER]:
            raise ValueError(f"checkpoint class order {stored} does not match")
        clf.w_ = data["w"]
        clf.b_ = data["b"]
        return clf


def maybe_alert(model: TextClassifier, text: str, source_ref: str,
                now: float, alert_id: str) -> Alert | None:
    """Alert iff the classifier names a hazard with confidence >= threshold."""
    cls, conf = model.assess(text)
    if cls == Category.NONE or conf < model.confidence_threshold:
        return None
    return Alert(alert_id=alert_id, source_ref=source_ref,
                 predicted_class=cls, confidence=conf, created_time=now)
