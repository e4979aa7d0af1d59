"""Post-training inspection: routing profiles, distance matrices, filter export.

Everything is emitted as CSV (RFC-4180 via the csv module) plus a JSON
summary, so figures can be re-created externally.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, UnsupportedAnalysisError, ValidationError


@dataclass
class RoutingProfile:
    class_name: str
    mean_weights: np.ndarray   # N_F, sums to ~1
    n_patches: int


@dataclass
class DistanceMatrix:
    labels: list
    values: np.ndarray         # symmetric, zero diagonal


def _require_routed(model):
    if model.router is None:
        raise UnsupportedAnalysisError(
            "routing analysis needs a moe or bank-of-filterbanks model, "
            "got baseline")


def patch_routing_weights(model, dataset, batch_size=64):
    """Router weights for every patch of every clip: (N, T, N_F)."""
    _require_routed(model)
    out = []
    for start in range(0, len(dataset), batch_size):
        router = model.router.forward(
            _as_tensor(dataset.patches[start:start + batch_size]))
        out.append(router.weights.data)
    return np.concatenate(out)


def _as_tensor(arr):
    from .tensor import Tensor
    return Tensor(arr)


def clip_routing_profiles(model, dataset, batch_size=64):
    """Per-clip mean routing vector: (N, N_F) plus the label matrix."""
    weights = patch_routing_weights(model, dataset, batch_size)
    return weights.mean(axis=1), dataset.labels


def routing_profiles(model, dataset, batch_size=64):
    """Mean routing vector per class over all patches of its clips."""
    weights = patch_routing_weights(model, dataset, batch_size)  # N x T x F
    n_f = weights.shape[-1]
    t = weights.shape[1]
    profiles = []
    for ci, name in enumerate(dataset.manifest.classes):
        mask = dataset.labels[:, ci] == 1
        if not mask.any():
            continue
        w = weights[mask].reshape(-1, n_f)
        profiles.append(RoutingProfile(class_name=name,
                                       mean_weights=w.mean(axis=0),
                                       n_patches=int(mask.sum()) * t))
    return profiles


def distance_matrix(profiles) -> DistanceMatrix:
    """Pairwise Euclidean distances between class routing profiles."""
    if len(profiles) < 2:
        raise ValidationError("distance matrix needs >= 2 profiles")
    vecs = np.stack([p.mean_weights for p in profiles]).astype(np.float64)
    diff = vecs[:, None, :] - vecs[None, :, :]
    values = np.sqrt((diff * diff).sum(axis=-1))
    np.fill_diagonal(values, 0.0)
    return DistanceMatrix(labels=[p.class_name for p in profiles], values=values)


def export_filters(tensors, bank_index, out_prefix):
    """Dump one bank's impulse responses and DFT magnitudes as CSV files.

    `tensors` is a checkpoint tensor dict; returns the two file paths.
    """
    key = f"frontend.bank{bank_index}.conv_w"
    if key not in tensors:
        banks = sorted(k for k in tensors if ".bank" in k and k.endswith("conv_w"))
        if not banks:
            raise UnsupportedAnalysisError(
                "filter export needs a bank-of-filterbanks checkpoint")
        raise ValidationError(
            f"bank index {bank_index} out of range; available: {banks}")
    w = np.asarray(tensors[key], dtype=np.float64)   # F x K
    time_path = f"{out_prefix}-filters-time.csv"
    spec_path = f"{out_prefix}-filters-spectrum.csv"
    with open(time_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["filter", "tap", "value"])
        for fi in range(w.shape[0]):
            for tap in range(w.shape[1]):
                wr.writerow([fi, tap, f"{w[fi, tap]:.8e}"])
    mags = np.abs(np.fft.rfft(w, axis=1))
    with open(spec_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["filter", "bin", "magnitude"])
        for fi in range(mags.shape[0]):
            for b in range(mags.shape[1]):
                wr.writerow([fi, b, f"{mags[fi, b]:.8e}"])
    return time_path, spec_path


def write_profiles(profiles, dm: DistanceMatrix, out_prefix, split):
    """CSV + JSON summary for routing profiles and their distance matrix."""
    prof_path = f"{out_prefix}-routing-profiles.csv"
    with open(prof_path, "w", newline="") as f:
        wr = csv.writer(f)
        n_f = len(profiles[0].mean_weights)
        wr.writerow(["class", "n_patches"] + [f"w{i}" for i in range(n_f)])
        for p in profiles:
            wr.writerow([p.class_name, p.n_patches]
                        + [f"{v:.6f}" for v in p.mean_weights])
    dist_path = f"{out_prefix}-distance-matrix.csv"
    with open(dist_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["class"] + dm.labels)
        for name, row in zip(dm.labels, dm.values):
            wr.writerow([name] + [f"{v:.6f}" for v in row])
    summary = {"split": split, "classes": dm.labels,
               "n_patches": {p.class_name: p.n_patches for p in profiles}}
    with open(f"{out_prefix}-routing-summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return prof_path, dist_path


def read_metrics_log(path):
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return sorted(rows, key=lambda r: r["epoch"])


def compare_runs(log_paths, labels=None, metric="top_k_patch"):
    """Join metric curves from several runs on a shared epoch axis.

    Returns (header, rows); entries are re-sorted by epoch before joining.
    """
    if labels is None:
        labels = [os.path.basename(os.path.dirname(os.path.abspath(p))) or p
                  for p in log_paths]
    runs = [read_metrics_log(p) for p in log_paths]
    epoch_axes = [[r["epoch"] for r in run] for run in runs]
    if len({tuple(a) for a in epoch_axes}) > 1:
        raise AlignmentError(
            "metric logs do not share an epoch axis; lengths "
            f"{[len(a) for a in epoch_axes]}")
    header = ["epoch"] + list(labels)
    rows = []
    for i, epoch in enumerate(epoch_axes[0]):
        rows.append([epoch] + [run[i][metric] for run in runs])
    return header, rows


def write_compare_csv(header, rows, path):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(header)
        for row in rows:
            wr.writerow([row[0]] + [f"{v:.6f}" for v in row[1:]])
