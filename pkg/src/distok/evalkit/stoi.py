"""Short-time objective intelligibility, following the 2011 reference algorithm's constants."""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.signal import resample_poly

FS = 10000
FRAME = 256
NFFT = 512
N_BANDS = 15
MIN_FREQ = 150.0
N_SEG = 30  # frames per intermediate segment (384 ms)
BETA = -15.0  # lower signal-to-distortion bound, dB
DYN_RANGE = 40.0
EPS = np.finfo(np.float64).eps


def _window():
    return np.hanning(FRAME + 2)[1:-1]


@lru_cache(maxsize=4)
def third_octave_bands(fs=FS, nfft=NFFT, n_bands=N_BANDS, min_freq=MIN_FREQ):
    """Binary band matrix ``[n_bands, nfft//2 + 1]`` and band centre frequencies."""
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(n_bands, dtype=np.float64)
    centres = min_freq * 2.0 ** (k / 3.0)
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6.0)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6.0)
    obm = np.zeros((n_bands, len(f)))
    for i in range(n_bands):
        a = int(np.argmin((f - lo[i]) ** 2))
        b = int(np.argmin((f - hi[i]) ** 2))
        obm[i, a:b] = 1.0
    return obm, centres


def _frames(x, hop):
    w = _window()
    return np.array([w * x[i:i + FRAME] for i in range(0, len(x) - FRAME, hop)])


def _overlap_add(frames, hop):
    n = len(frames)
    out = np.zeros((n - 1) * hop + FRAME) if n else np.zeros(0)
    for i, fr in enumerate(frames):
        out[i * hop:i * hop + FRAME] += fr
    return out


def remove_silent_frames(x, y, dyn_range=DYN_RANGE, hop=FRAME // 2):
    """Drop frames of both signals where ``x`` sits more than ``dyn_range`` dB under its loudest frame."""
    xf, yf = _frames(x, hop), _frames(y, hop)
    if not len(xf):
        return np.zeros(0), np.zeros(0)
    energy = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + EPS)
    keep = energy > energy.max() - dyn_range
    return _overlap_add(xf[keep], hop), _overlap_add(yf[keep], hop)


def _band_envelopes(x):
    spec = np.fft.rfft(_frames(x, FRAME // 2), n=NFFT, axis=1)
    obm, _ = third_octave_bands()
    return np.sqrt(obm @ (np.abs(spec) ** 2).T)  # [bands, frames]


def _to_fs(x, rate):
    if rate == FS:
        return np.asarray(x, dtype=np.float64)
    ratio = Fraction(FS, int(rate))
    return resample_poly(np.asarray(x, dtype=np.float64), ratio.numerator, ratio.denominator)


def stoi(clean, degraded, rate=16000):
    """Intelligibility score of ``degraded`` against ``clean`` (typically in ``[0, 1]``)."""
    clean = np.asarray(getattr(clean, "samples", clean), dtype=np.float64)
    degraded = np.asarray(getattr(degraded, "samples", degraded), dtype=np.float64)
    if clean.shape != degraded.shape:
        raise ValueError(f"length mismatch: {clean.shape} vs {degraded.shape}")
    x, y = remove_silent_frames(_to_fs(clean, rate), _to_fs(degraded, rate))
    have = len(range(0, len(x) - FRAME, FRAME // 2))
    if have < N_SEG:
        raise ValueError(f"too short for STOI: {have} active frames, need at least {N_SEG}")
    xe, ye = _band_envelopes(x), _band_envelopes(y)
    clip = 10.0 ** (-BETA / 20.0)
    scores = []
    for m in range(N_SEG, xe.shape[1] + 1):
        xs, ys = xe[:, m - N_SEG:m], ye[:, m - N_SEG:m]
        scale = np.linalg.norm(xs, axis=1, keepdims=True) / (np.linalg.norm(ys, axis=1, keepdims=True) + EPS)
        yp = np.minimum(ys * scale, xs * (1.0 + clip))
        yp = yp - yp.mean(axis=1, keepdims=True)
        xc = xs - xs.mean(axis=1, keepdims=True)
        yp /= np.linalg.norm(yp, axis=1, keepdims=True) + EPS
        xc /= np.linalg.norm(xc, axis=1, keepdims=True) + EPS
        scores.append((yp * xc).sum(axis=1))
    return float(np.mean(scores))
