"""Codebook usage statistics and k-means/silhouette cluster analysis of latents."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class UtilizationReport:
    codebook_size: int
    used_count: int
    total_tokens: int
    frequencies: tuple  # ((token, count, ratio), ...) sorted by count desc, then token

    @property
    def utilization_rate(self):
        return self.used_count / self.codebook_size

    def top(self, k=50):
        return self.frequencies[:k]


def _tokens_of(item):
    return item.tokens if hasattr(item, "tokens") else [int(t) for t in np.ravel(item)]


def codebook_utilization(streams, vocab_size):
    """Count tokens over ``streams`` (``TokenStream`` objects or plain token sequences)."""
    if vocab_size < 1:
        raise ValueError("vocab_size must be >= 1")
    counts = Counter()
    for s in streams:
        counts.update(int(t) for t in _tokens_of(s))
    bad = [t for t in counts if not 0 <= t < vocab_size]
    if bad:
        raise ValueError(f"token {min(bad)} outside vocabulary of {vocab_size}")
    total = sum(counts.values())
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    freqs = tuple((t, c, c / total) for t, c in ordered)
    return UtilizationReport(int(vocab_size), len(counts), total, freqs)


def write_frequency_csv(report, path, top=None):
    rows = report.frequencies if top is None else report.top(top)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "token", "count", "ratio"])
        for rank, (tok, cnt, ratio) in enumerate(rows, 1):
            w.writerow([rank, tok, cnt, repr(ratio)])


# -- k-means ---------------------------------------------------------------------------------
def _sq_dists(x, c):
    return np.maximum(((x[:, None, :] - c[None, :, :]) ** 2).sum(-1), 0.0)


def kmeans_pp(x, k, rng):
    centres = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = _sq_dists(x, np.array(centres)).min(axis=1)
        total = d2.sum()
        probs = d2 / total if total > 0 else np.full(len(x), 1.0 / len(x))
        centres.append(x[rng.choice(len(x), p=probs)])
    return np.array(centres)


def kmeans(x, k, max_iter=30, rng=None):
    """Lloyd iterations from k-means++ seeds; returns ``(assignments, centres)``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    centres = kmeans_pp(x, k, rng)
    assign = _sq_dists(x, centres).argmin(axis=1)
    for _ in range(max_iter):
        for j in range(k):
            members = x[assign == j]
            if len(members):
                centres[j] = members.mean(axis=0)
        new = _sq_dists(x, centres).argmin(axis=1)
        if np.array_equal(new, assign):
            break
        assign = new
    return assign, centres


def silhouette(x, labels):
    """Mean silhouette; singleton-cluster points score 0, and so does a fully degenerate set."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    d = np.sqrt(_sq_dists(x, x))
    if not d.any():
        return 0.0
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette undefined for K<2")
    scores = np.zeros(len(x))
    for i in range(len(x)):
        own = labels == labels[i]
        if own.sum() < 2:
            continue
        a = d[i, own].sum() / (own.sum() - 1)
        b = min(d[i, labels == u].mean() for u in uniq if u != labels[i])
        m = max(a, b)
        scores[i] = (b - a) / m if m > 0 else 0.0
    return float(scores.mean())


def kmeans_silhouette(latents, K=4, max_iter=30, seed=42, sample_n=500):
    """Cluster a random sample of ``latents[N, d]``; returns ``(assignments, silhouette)``.

    ``sample_n=None`` uses every row.
    """
    if K < 2:
        raise ValueError("silhouette undefined for K<2")
    x = np.asarray(latents, dtype=np.float64)
    x = x.reshape(len(x), -1)
    rng = np.random.default_rng(seed)
    if sample_n is not None:
        if sample_n > len(x):
            raise ValueError(f"sample_n {sample_n} exceeds the {len(x)} available frames")
        x = x[np.sort(rng.choice(len(x), size=sample_n, replace=False))]
    if not np.ptp(x, axis=0).any():
        return np.zeros(len(x), dtype=np.int64), 0.0
    distinct = len(np.unique(x, axis=0))
    if K > distinct:
        raise ValueError(f"K={K} exceeds the {distinct} distinct points")
    assign, _ = kmeans(x, K, max_iter, rng)
    return assign, silhouette(x, assign)
