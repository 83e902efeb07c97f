"""Spectral distances and exact token-rate arithmetic."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..audio import CANONICAL_RATE, AudioBuffer, mel_spectrogram, stft_magnitude
from ..quant import bits_for

MEL_N_FFT, MEL_HOP, MEL_N_MELS = 1024, 256, 80
STFT_SIZES = (512, 1024, 2048)
LOG_MAG_FLOOR = 1e-7


def _pair(x, x_hat):
    a = np.asarray(getattr(x, "samples", x), dtype=np.float64)
    b = np.asarray(getattr(x_hat, "samples", x_hat), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def mel_error(x, x_hat, sample_rate=CANONICAL_RATE):
    """Mean absolute log-mel difference (n_fft 1024, hop 256, 80 bands)."""
    a, b = _pair(x, x_hat)
    ma = mel_spectrogram(AudioBuffer(a, sample_rate), MEL_N_FFT, MEL_HOP, MEL_N_MELS).magnitudes
    mb = mel_spectrogram(AudioBuffer(b, sample_rate), MEL_N_FFT, MEL_HOP, MEL_N_MELS).magnitudes
    return float(np.mean(np.abs(ma - mb)))


def stft_terms(x, x_hat):
    """Per-resolution ``(magnitude L1, log-magnitude L1)`` pairs."""
    a, b = _pair(x, x_hat)
    out = []
    for n in STFT_SIZES:
        sa = stft_magnitude(a, n, n // 4).magnitudes
        sb = stft_magnitude(b, n, n // 4).magnitudes
        log_l1 = np.mean(np.abs(np.log(sa + LOG_MAG_FLOOR) - np.log(sb + LOG_MAG_FLOOR)))
        out.append((float(np.mean(np.abs(sa - sb))), float(log_l1)))
    return out


def stft_distance(x, x_hat):
    return float(np.mean([m + lg for m, lg in stft_terms(x, x_hat)]))


def _exact(v):
    return v if isinstance(v, (int, Fraction)) else Fraction(str(v))


def tkr(n_tokens, duration, stages=1):
    """Tokens per second as an exact fraction: ``n_tokens * stages / duration``."""
    duration = _exact(duration)
    if duration <= 0:
        raise ValueError("duration must be positive")
    if n_tokens < 0 or stages < 1:
        raise ValueError("token count must be >= 0 and stages >= 1")
    return Fraction(int(n_tokens) * int(stages)) / duration


def stream_tkr(stream):
    return tkr(len(stream.records), Fraction(stream.sample_count, stream.sample_rate))


def bps(frame_rate, codebook_sizes):
    """``frame_rate * sum(ceil(log2 k))`` in exact arithmetic."""
    return _exact(frame_rate) * sum(bits_for(k) for k in codebook_sizes)


def bps_from_bits(frame_rate, bits):
    return _exact(frame_rate) * int(bits)


def _varint_bits(n):
    return 8 * max(1, -(-int(n).bit_length() // 7))


def stream_bps(stream):
    """``(payload, payload + length field)`` bits per second for one stream."""
    spec = stream.spec
    seconds = Fraction(stream.sample_count, stream.sample_rate)
    if seconds <= 0:
        raise ValueError("stream has zero duration")
    payload = bps(stream_tkr(stream), [spec.radix] * spec.n_digits)
    lengths = sum(_varint_bits(n) for n in stream.lengths)
    return payload, payload + Fraction(lengths) / seconds
