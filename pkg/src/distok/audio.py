"""Audio buffers, 16-bit PCM WAV I/O, linear resampling, and spectral transforms."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

CANONICAL_RATE = 16000
LOG_FLOOR = 1e-5
_PCM_SCALE = 32768.0


class WavFormatError(ValueError):
    """Raised for WAV files outside the supported 16-bit PCM mono subset."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """Time-by-frequency grid; ``kind`` is ``"magnitude"`` or ``"log-mel"``."""

    magnitudes: np.ndarray
    hop: int
    window: int
    kind: str = "magnitude"

    @property
    def n_frames(self):
        return self.magnitudes.shape[0]


def read_wav(path):
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as f:
            channels = f.getnchannels()
            width = f.getsampwidth()
            rate = f.getframerate()
            if channels != 1:
                raise WavFormatError(f"{path}: unsupported channel count {channels} (mono only)")
            if width != 2:
                raise WavFormatError(f"{path}: unsupported sample width {8 * width} bits (16-bit PCM only)")
            raw = f.readframes(f.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"{path}: malformed or non-PCM WAV ({exc})") from exc
    except EOFError as exc:
        raise WavFormatError(f"{path}: truncated WAV header") from exc
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm / _PCM_SCALE, rate)


def write_wav(buffer, path):
    """Write as 16-bit PCM mono; samples outside [-1, 1] are clamped first."""
    clipped = np.clip(buffer.samples, -1.0, 1.0)
    pcm = np.clip(np.round(clipped * _PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(buffer.sample_rate)
        f.writeframes(pcm.tobytes())


def resample_linear(buffer, target_rate):
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == buffer.sample_rate:
        return buffer
    n = len(buffer.samples)
    n_out = int(round(n * target_rate / buffer.sample_rate))
    if n == 0 or n_out == 0:
        return AudioBuffer(np.zeros(n_out), target_rate)
    pos = np.arange(n_out) * (buffer.sample_rate / target_rate)
    # np.interp holds the last sample past the end
    return AudioBuffer(np.interp(pos, np.arange(n), buffer.samples), target_rate)


@lru_cache(maxsize=32)
def hann_window(n):
    """Periodic Hann window."""
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    w.setflags(write=False)
    return w


def frame_indices(n_samples, window_len, hop):
    """Gather indices mapping a raw signal to centre-padded, reflected frames.

    Signals shorter than the window are first zero-extended to ``window_len``
    (index ``n_samples`` then points at an appended zero). The returned array
    has shape ``[n_frames, window_len]`` with
    ``n_frames = (padded_len - window_len) // hop + 1``.
    """
    if not window_len >= hop > 0:
        raise ValueError("need window_len >= hop > 0")
    base = max(n_samples, window_len)
    src = np.arange(base)
    if base > n_samples:
        src[n_samples:] = n_samples  # sentinel -> zero sample
    half = window_len // 2
    left = src[1:half + 1][::-1]
    right = src[-half - 1:-1][::-1]
    padded = np.concatenate([left, src, right])
    n_frames = (len(padded) - window_len) // hop + 1
    starts = np.arange(n_frames) * hop
    return padded[starts[:, None] + np.arange(window_len)[None, :]]


def _frames(samples, window_len, hop):
    idx = frame_indices(len(samples), window_len, hop)
    ext = np.concatenate([samples, [0.0]])
    return ext[idx]


def stft_magnitude(buffer, window_len, hop):
    """Hann-windowed magnitude STFT with reflect centre padding, ``[frames, window_len//2 + 1]``."""
    samples = getattr(buffer, "samples", buffer)
    frames = _frames(np.asarray(samples, dtype=np.float64), window_len, hop)
    spec = np.abs(np.fft.rfft(frames * hann_window(window_len), axis=-1))
    return Spectrogram(spec, hop, window_len)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def mel_filterbank(sample_rate, n_fft, n_mels, fmin=0.0, fmax=None):
    """Triangular HTK-scale filters, ``[n_mels, n_fft//2 + 1]``, unnormalised."""
    n_bins = n_fft // 2 + 1
    if n_mels >= n_bins:
        raise ValueError(f"n_mels ({n_mels}) must be < n_fft/2 + 1 ({n_bins})")
    fmax = sample_rate / 2.0 if fmax is None else fmax
    freqs = np.arange(n_bins) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def mel_spectrogram(buffer, n_fft, hop, n_mels):
    """Log-compressed mel power spectrogram, ``log(1e-5 + mel)``, ``[frames, n_mels]``."""
    mag = stft_magnitude(buffer, n_fft, hop).magnitudes
    rate = getattr(buffer, "sample_rate", CANONICAL_RATE)
    fb = mel_filterbank(rate, n_fft, n_mels)
    return Spectrogram(np.log(LOG_FLOOR + (mag * mag) @ fb.T), hop, n_fft, kind="log-mel")
