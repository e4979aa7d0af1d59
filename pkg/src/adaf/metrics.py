"""Multilabel ranking metrics: mean average precision and top-k accuracy."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import NoPositivesError, ShapeError


def average_precision(scores, targets):
    """AP for one class: mean of precision at each positive's rank.

    Ranks descend by score; ties keep original order (stable sort).
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    if scores.shape != targets.shape:
        raise ShapeError(f"AP shapes {scores.shape} vs {targets.shape}")
    npos = int((targets == 1).sum())
    if npos == 0:
        raise NoPositivesError("class has no positive targets")
    order = np.argsort(-scores, kind="stable")
    hits = (targets[order] == 1)
    ranks = np.arange(1, len(scores) + 1)
    precision_at = np.cumsum(hits) / ranks
    return float(precision_at[hits].mean())


def mean_average_precision(scores, targets):
    """(MAP, per-class AP vector, excluded class indices) over N x C inputs.

    Classes without any positive are excluded from the mean (their AP entry
    is NaN) and reported.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    if scores.shape != targets.shape or scores.ndim != 2:
        raise ShapeError(f"MAP shapes {scores.shape} vs {targets.shape}")
    n_classes = scores.shape[1]
    aps = np.full(n_classes, np.nan)
    excluded = []
    for c in range(n_classes):
        if (targets[:, c] == 1).sum() == 0:
            excluded.append(c)
            continue
        aps[c] = average_precision(scores[:, c], targets[:, c])
    if len(excluded) == n_classes:
        raise NoPositivesError("no class has positive targets")
    return float(np.nanmean(aps)), aps, excluded


def top_k_patch_accuracy(patch_logits, patch_labels, k=5):
    """Fraction of patches with any true class among the k highest logits."""
    logits = np.asarray(patch_logits)
    labels = np.asarray(patch_labels)
    if logits.shape != labels.shape or logits.ndim != 2:
        raise ShapeError(f"top-k shapes {logits.shape} vs {labels.shape}")
    c = logits.shape[1]
    if k > c:
        raise ShapeError(f"k={k} exceeds {c} classes")
    if k == c:
        topk_mask = np.ones_like(labels, dtype=bool)
    else:
        part = np.argpartition(-logits, k - 1, axis=1)[:, :k]
        topk_mask = np.zeros_like(labels, dtype=bool)
        np.put_along_axis(topk_mask, part, True, axis=1)
    return float((topk_mask & (labels == 1)).any(axis=1).mean())


def clip_top1_accuracy(clip_scores, clip_labels):
    """Fraction of clips whose highest-scoring class is a true label."""
    scores = np.asarray(clip_scores)
    labels = np.asarray(clip_labels)
    best = scores.argmax(axis=1)
    return float((labels[np.arange(len(best)), best] == 1).mean())


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


@dataclass
class MetricsReport:
    map: float
    per_class_ap: list
    excluded_classes: list
    top_k_patch: float
    clip_accuracy: float
    k: int = 5
    loss: float | None = None

    def to_dict(self):
        return {"map": self.map,
                "per_class_ap": [None if np.isnan(a) else float(a)
                                 for a in self.per_class_ap],
                "excluded_classes": list(self.excluded_classes),
                "top_k_patch": self.top_k_patch,
                "clip_accuracy": self.clip_accuracy,
                "k": self.k,
                "loss": self.loss}

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    def save_per_class_csv(self, path, class_names=None):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["class", "ap"])
            for i, ap in enumerate(self.per_class_ap):
                name = class_names[i] if class_names else str(i)
                w.writerow([name, "" if np.isnan(ap) else f"{ap:.6f}"])


def evaluate_scores(clip_scores, clip_labels, patch_logits, patch_labels, k=5,
                    loss=None):
    """Assemble a MetricsReport; sigmoid is applied to scores here, not in
    the loss path (ranking metrics are unaffected by monotone squashing)."""
    m, aps, excluded = mean_average_precision(sigmoid(clip_scores), clip_labels)
    topk = top_k_patch_accuracy(patch_logits, patch_labels, k=k)
    acc = clip_top1_accuracy(clip_scores, clip_labels)
    return MetricsReport(map=m, per_class_ap=list(aps), excluded_classes=excluded,
                         top_k_patch=topk, clip_accuracy=acc, k=k, loss=loss)
