"""Slow, independent reference implementations used only by the tests."""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np


def conv1d_loops(x, w, b, stride=1, pad=(0, 0)):
    B, cin, T = x.shape
    cout, _, K = w.shape
    xp = np.zeros((B, cin, T + pad[0] + pad[1]))
    xp[:, :, pad[0]:pad[0] + T] = x
    n_out = (xp.shape[-1] - K) // stride + 1
    out = np.zeros((B, cout, n_out))
    for bi in range(B):
        for o in range(cout):
            for t in range(n_out):
                acc = 0.0 if b is None else b[o]
                for c in range(cin):
                    for k in range(K):
                        acc += w[o, c, k] * xp[bi, c, t * stride + k]
                out[bi, o, t] = acc
    return out


def conv_transpose1d_loops(x, w, b, stride):
    B, cin, T = x.shape
    _, cout, K = w.shape
    out = np.zeros((B, cout, (T - 1) * stride + K))
    for bi in range(B):
        for c in range(cin):
            for t in range(T):
                for o in range(cout):
                    for k in range(K):
                        out[bi, o, t * stride + k] += x[bi, c, t] * w[c, o, k]
    if b is not None:
        out += b[None, :, None]
    return out


def brute_peaks(x, prominence):
    """Indices whose topographic prominence reaches ``prominence``; plateaus report their middle sample.

    Prominence is computed the slow way: for each side, walk outward until a
    strictly higher sample (or the edge) and take the minimum on the way; the
    reference level is the higher of the two minima.
    """
    x = list(map(float, x))
    n = len(x)
    peaks = []
    i = 1
    while i < n - 1:
        if x[i - 1] < x[i]:
            j = i
            while j + 1 < n and x[j + 1] == x[i]:
                j += 1
            if j + 1 < n and x[j + 1] < x[i]:
                peaks.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    kept = []
    for p in peaks:
        left_min = x[p]
        for k in range(p, -1, -1):
            if x[k] > x[p]:
                break
            left_min = min(left_min, x[k])
        right_min = x[p]
        for k in range(p, n):
            if x[k] > x[p]:
                break
            right_min = min(right_min, x[k])
        if x[p] - max(left_min, right_min) >= prominence:
            kept.append(p)
    return kept


def silhouette_loops(x, labels):
    x = np.asarray(x, dtype=float)
    n = len(x)
    d = [[math.dist(x[i], x[j]) for j in range(n)] for i in range(n)]
    if all(v == 0 for row in d for v in row):
        return 0.0
    clusters = sorted(set(labels))
    total = 0.0
    for i in range(n):
        mates = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not mates:
            continue
        a = sum(d[i][j] for j in mates) / len(mates)
        b = min(
            sum(d[i][j] for j in range(n) if labels[j] == c) / sum(1 for j in range(n) if labels[j] == c)
            for c in clusters if c != labels[i]
        )
        m = max(a, b)
        total += (b - a) / m if m > 0 else 0.0
    return total / n


def count_tokens(token_lists):
    table = defaultdict(int)
    for toks in token_lists:
        for t in toks:
            table[t] += 1
    return dict(table)


def log_mel_direct(x, n_fft, hop, n_mels, rate, floor=1e-5):
    """Log-mel through an explicit per-frame DFT sum and a separately built HTK filterbank."""
    x = np.asarray(x, dtype=float)
    half = n_fft // 2
    padded = np.pad(x, (half, half), mode="reflect")
    n_frames = (len(padded) - n_fft) // hop + 1
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n_fft) / n_fft)
    k = np.arange(half + 1)
    basis = np.exp(-2j * np.pi * np.outer(np.arange(n_fft), k) / n_fft)
    mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    inv = lambda m: 700.0 * (10 ** (m / 2595.0) - 1.0)
    edges = inv(np.linspace(mel(0.0), mel(rate / 2), n_mels + 2))
    freqs = k * rate / n_fft
    fb = np.zeros((n_mels, half + 1))
    for m in range(n_mels):
        lo, c, hi = edges[m], edges[m + 1], edges[m + 2]
        for j, f in enumerate(freqs):
            if lo < f <= c:
                fb[m, j] = (f - lo) / (c - lo)
            elif c < f < hi:
                fb[m, j] = (hi - f) / (hi - c)
    out = np.zeros((n_frames, n_mels))
    for t in range(n_frames):
        frame = padded[t * hop:t * hop + n_fft] * win
        power = np.abs(frame @ basis) ** 2
        out[t] = np.log(floor + fb @ power)
    return out


def varint_decode_all(blob):
    vals, cur, shift = [], 0, 0
    for byte in blob:
        cur |= (byte & 0x7F) << shift
        if byte & 0x80:
            shift += 7
        else:
            vals.append(cur)
            cur, shift = 0, 0
    return vals
