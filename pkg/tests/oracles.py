"""Independent brute-force reimplementations used as test oracles.

Everything here is deliberately naive (nested loops, direct summation)
and shares no code with the implementations it checks.
"""

import numpy as np


def conv1d_same_oracle(x, W, b):
    """Nested-loop same-length cross-correlation, pad_left = K//2."""
    B, _, L = x.shape
    F, K = W.shape
    pad_left = K // 2
    xp = np.zeros((B, L + K - 1))
    xp[:, pad_left:pad_left + L] = x[:, 0, :]
    out = np.zeros((B, F, L))
    for n in range(B):
        for f in range(F):
            for t in range(L):
                acc = 0.0
                for j in range(K):
                    acc += W[f, j] * xp[n, t + j]
                out[n, f, t] = acc + b[f]
    return out


def combine_oracle(per_route, weights):
    """Triple-loop weighted sum over routes."""
    B, T, NF, E = per_route.shape
    out = np.zeros((B, T, E))
    for b in range(B):
        for t in range(T):
            for f in range(NF):
                out[b, t] += weights[b, t, f] * per_route[b, t, f]
    return out


def distance_matrix_oracle(vectors):
    """Double-loop Euclidean distances."""
    n = len(vectors)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = np.sqrt(((vectors[i] - vectors[j]) ** 2).sum())
    return out


def average_precision_oracle(scores, targets):
    """Rank positives by score (stable), average precision at their ranks."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    precisions = []
    hits = 0
    for rank, i in enumerate(order, start=1):
        if targets[i] == 1:
            hits += 1
            precisions.append(hits / rank)
    return sum(precisions) / len(precisions)


def map_oracle(scores, targets):
    aps = []
    for c in range(scores.shape[1]):
        if (targets[:, c] == 1).any():
            aps.append(average_precision_oracle(scores[:, c], targets[:, c]))
    return sum(aps) / len(aps)


def dft_peak_hz(samples, rate, lo_hz, hi_hz):
    """Dominant frequency by direct DFT-sum evaluation over a 1 Hz grid."""
    n = len(samples)
    t = np.arange(n) / rate
    best_f, best_mag = None, -1.0
    for f in range(int(lo_hz), int(hi_hz) + 1):
        z = (samples * np.exp(-2j * np.pi * f * t)).sum()
        mag = abs(z)
        if mag > best_mag:
            best_f, best_mag = f, mag
    return best_f
