"""Downstream measurement: encodings, per-neuron topics, softmax classifier,
macro precision/recall/F1 and embedding export."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .corpus import DocMatrix, Vocabulary
from .model import ModelParams, compete_batch


def encode_matrix(
    data: DocMatrix,
    params: ModelParams,
    competition_at_inference: bool = False,
    batch: int = 1024,
) -> np.ndarray:
    """Encode every document: row i = tanh(W x_i + b), shape (n, h).

    With competition_at_inference the variant's layer runs on top in its
    inference form (the k-sparse baseline keeps floor(k * alpha) entries).
    """
    if data.v != params.v:
        raise ValueError(f"corpus has v={data.v} but model expects v={params.v}")
    out = np.empty((data.n, params.h), dtype=params.dtype)
    for start in range(0, data.n, batch):
        rows = np.arange(start, min(start + batch, data.n))
        Z = np.tanh(data.dense(rows, dtype=params.dtype) @ params.W.T + params.b)
        if competition_at_inference:
            Z, _ = compete_batch(Z, params, training=False)
        out[rows] = Z
    return out


def extract_topics(
    params: ModelParams, vocab: Vocabulary | Sequence[str], top_n: int = 10
) -> list[list[tuple[str, float]]]:
    """Per hidden neuron, the top_n vocabulary words by tied decoder weight.

    Neuron j's list holds (token, W[j, i]) pairs in non-increasing weight
    order, ties toward the lower index. Ranking is by signed weight: a large
    positive weight means the neuron generates that word through the sigmoid
    reconstruction.
    """
    tokens = vocab.tokens if isinstance(vocab, Vocabulary) else list(vocab)
    if len(tokens) != params.v:
        raise ValueError("vocabulary size does not match the model")
    if not 1 <= top_n <= params.v:
        raise ValueError(f"top_n must lie in [1, {params.v}], got {top_n}")
    topics = []
    for j in range(params.h):
        row = params.W[j]
        best = np.argsort(-row, kind="stable")[:top_n]
        topics.append([(tokens[i], float(row[i])) for i in best])
    return topics


@dataclass
class ClassifierConfig:
    iters: int = 300
    learning_rate: float = 0.1
    seed: int = 0


@dataclass
class SoftmaxClassifier:
    """Multinomial logistic regression: logits = X W^T + b."""

    W: np.ndarray  # (C, h)
    b: np.ndarray  # (C,)

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        logits = X @ self.W.T + self.b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax takes the first maximum, i.e. ties go to the lower class id
        return np.argmax(self.predict_proba(X), axis=1)


def train_classifier(
    features: np.ndarray, labels: np.ndarray, cfg: ClassifierConfig | None = None
) -> SoftmaxClassifier:
    """Fit the softmax classifier by full-batch gradient descent (Adam).

    Minimizes the mean cross-entropy, no regularization, zero init; the
    run is deterministic for a fixed config. Requires every class id in
    0..C-1 to be present.
    """
    cfg = cfg or ClassifierConfig()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree")
    n, h = X.shape
    classes = np.unique(y)
    num_classes = int(classes.max()) + 1
    if num_classes < 2 or len(classes) != num_classes or n < num_classes:
        raise ValueError("need n >= C >= 2 with every class present")

    Y = np.zeros((n, num_classes))
    Y[np.arange(n), y] = 1.0
    clf = SoftmaxClassifier(W=np.zeros((num_classes, h)), b=np.zeros(num_classes))
    mW = np.zeros_like(clf.W)
    vW = np.zeros_like(clf.W)
    mb = np.zeros_like(clf.b)
    vb = np.zeros_like(clf.b)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for t in range(1, cfg.iters + 1):
        delta = (clf.predict_proba(X) - Y) / n  # (n, C)
        gW = delta.T @ X
        gb = delta.sum(axis=0)
        for g, m, v, p in ((gW, mW, vW, clf.W), (gb, mb, vb, clf.b)):
            m += (1 - beta1) * (g - m)
            v += (1 - beta2) * (g * g - v)
            p -= cfg.learning_rate * (m / (1 - beta1**t)) / (np.sqrt(v / (1 - beta2**t)) + eps)
    return clf


@dataclass
class EvalReport:
    """Per-class and macro-averaged classification metrics."""

    per_class: list[dict]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    confusion: np.ndarray  # (C, C), rows = true class, cols = predicted

    def to_dict(self) -> dict:
        return {
            "per_class": self.per_class,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def evaluate(
    classifier: SoftmaxClassifier,
    features: np.ndarray,
    labels: np.ndarray,
    class_names: Sequence[str] | None = None,
) -> EvalReport:
    """Score argmax predictions; see report_from_predictions for the metrics."""
    X = np.asarray(features)
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree")
    if X.shape[1] != classifier.W.shape[1]:
        raise ValueError("feature width does not match the classifier")
    return report_from_predictions(classifier.predict(X), y, classifier.num_classes, class_names)


def report_from_predictions(
    pred: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    class_names: Sequence[str] | None = None,
) -> EvalReport:
    """Build an EvalReport from predicted and true class ids.

    Per class: precision = TP / (TP + FP), recall = TP / (TP + FN), F1 their
    harmonic mean, all defined as 0 when the denominator vanishes so a
    degenerate classifier scores poorly instead of erroring. Macro values
    are unweighted means over classes.
    """
    pred = np.asarray(pred, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if pred.shape != y.shape:
        raise ValueError("predictions and labels disagree")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)

    per_class = []
    precisions, recalls, f1s = [], [], []
    for cid in range(num_classes):
        tp = int(confusion[cid, cid])
        fp = int(confusion[:, cid].sum()) - tp
        fn = int(confusion[cid, :].sum()) - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
        entry = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": tp + fn,
        }
        if class_names is not None:
            entry["class"] = class_names[cid]
        per_class.append(entry)

    return EvalReport(
        per_class=per_class,
        macro_precision=float(np.mean(precisions)),
        macro_recall=float(np.mean(recalls)),
        macro_f1=float(np.mean(f1s)),
        accuracy=float(np.trace(confusion) / len(y)) if len(y) else 0.0,
        confusion=confusion,
    )


def export_embeddings(
    features: np.ndarray,
    labels: np.ndarray | None,
    doc_ids: Sequence[str],
    path: str | Path | IO[str],
) -> None:
    """Write encodings as tab-separated text: doc_id, label, h feature columns.

    Values carry 6 significant digits; rendering (t-SNE and friends) is left
    to external tools.
    """
    X = np.asarray(features)
    n, h = X.shape
    if len(doc_ids) != n:
        raise ValueError("doc_ids and features disagree")
    lab = np.full(n, -1, dtype=np.int64) if labels is None else np.asarray(labels)
    if lab.shape[0] != n:
        raise ValueError("labels and features disagree")

    def write(fh: IO[str]) -> None:
        fh.write("doc_id\tlabel\t" + "\t".join(f"f{j}" for j in range(h)) + "\n")
        for i in range(n):
            vals = "\t".join(f"{x:.6g}" for x in X[i])
            fh.write(f"{doc_ids[i]}\t{int(lab[i])}\t{vals}\n")

    if hasattr(path, "write"):
        write(path)  # type: ignore[arg-type]
    else:
        with open(path, "w", encoding="utf-8") as fh:
            write(fh)
