"""Differentiable log-mel spectrograms and the reconstruction objective."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .. import ndgrad as nd
from ..audio import LOG_FLOOR, frame_indices, hann_window, mel_filterbank
from ..ndgrad import Tensor


@lru_cache(maxsize=16)
def _mel_basis(sample_rate, n_fft, n_mels):
    return np.ascontiguousarray(mel_filterbank(sample_rate, n_fft, n_mels).T)


def log_mel_tensor(x, n_fft, hop, n_mels, sample_rate):
    """Log-mel spectrogram of ``x[B, S]``; ``[B, frames, n_mels]``, same framing as the numpy path."""
    B, S = x.shape
    idx = frame_indices(S, n_fft, hop)
    xe = nd.concat([x, Tensor(np.zeros((B, 1)))], axis=1)
    frames = nd.take(xe, idx, axis=1) * hann_window(n_fft)
    power = nd.rfft_power(frames)
    return nd.log(nd.matmul(power, _mel_basis(sample_rate, n_fft, n_mels)) + LOG_FLOOR)


def reconstruction_terms(x, x_hat, cfg):
    """Weighted loss terms as tensors: ``[time, mel_0, ..., mel_3]``.

    ``x`` and ``x_hat`` are ``[B, S]`` (or ``[B, 1, S]``) tensors or arrays.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    x_hat = x_hat if isinstance(x_hat, Tensor) else Tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_hat.shape}")
    if x.ndim == 3:
        x, x_hat = x.reshape(x.shape[0], -1), x_hat.reshape(x_hat.shape[0], -1)
    elif x.ndim == 1:
        x, x_hat = x.reshape(1, -1), x_hat.reshape(1, -1)
    terms = [nd.l1_loss(x, x_hat) * cfg.time_l1_weight]
    for w, n_fft, n_mels in zip(cfg.mel_weights, cfg.mel_n_ffts, cfg.mel_n_mels):
        hop = n_fft // 4
        m = log_mel_tensor(x, n_fft, hop, n_mels, cfg.sample_rate)
        m_hat = log_mel_tensor(x_hat, n_fft, hop, n_mels, cfg.sample_rate)
        terms.append((nd.l1_loss(m, m_hat) + nd.mse_loss(m, m_hat)) * w)
    return terms


def reconstruction_loss(x, x_hat, cfg):
    terms = reconstruction_terms(x, x_hat, cfg)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total
