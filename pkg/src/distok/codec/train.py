"""Desk-scale codec training on a manifest, with boundaries supplied by a frozen detector."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import ndgrad as nd
from ..corpus import load_audio, read_manifest
from ..detector import detect_boundaries, split_heldout
from ..ndgrad import Tensor
from ..segmenter import SegmentLayout
from .losses import reconstruction_loss
from .model import COMMITMENT, Codec, forward, map_boundaries, pad_to_ratio

log = logging.getLogger(__name__)


@dataclass
class CodecTrainResult:
    model: Codec
    history: list = field(default_factory=list)
    heldout_initial: float = float("nan")
    heldout_final: float = float("nan")


@dataclass(frozen=True)
class _Utterance:
    samples: np.ndarray
    cuts: tuple  # boundary positions in samples


def _prepare(paths, detector, cfg):
    r = cfg.downsample_ratio
    det_r = detector.cfg.downsample_ratio
    out = []
    for path in paths:
        x = load_audio(path, cfg.sample_rate).samples
        x = pad_to_ratio(x, np.lcm(r, det_r))
        cuts = tuple(int(b) * det_r for b in detect_boundaries(x, detector).indices)
        out.append(_Utterance(x, cuts))
    return out


def _layout(cuts, start, n_samples, ratio):
    n_frames = n_samples // ratio
    inside = [c - start for c in cuts if start < c < start + n_samples]
    return SegmentLayout.from_boundaries(map_boundaries(inside, 1, ratio, n_frames), n_frames)


def _crop(utt, size, align, rng):
    slack = (len(utt.samples) - size) // align
    start = int(rng.integers(0, slack + 1)) * align if slack > 0 else 0
    seg = np.zeros(size)
    piece = utt.samples[start:start + size]
    seg[:len(piece)] = piece
    return seg, start


def _loss(codec, x, layouts):
    x_hat, _, pre = forward(codec, Tensor(x), layouts)
    loss = reconstruction_loss(Tensor(x[:, 0, :]), x_hat.reshape(x.shape[0], -1), codec.cfg)
    if codec.vq is not None:
        target = Tensor(codec.vq.quantize(pre.data)[0])
        loss = loss + nd.mse_loss(pre, target) * COMMITMENT
    return loss, pre


def heldout_loss(codec, utterances):
    """Mean reconstruction loss over whole held-out utterances."""
    frozen = codec.frozen()
    r = codec.cfg.downsample_ratio
    vals = []
    for u in utterances:
        x = pad_to_ratio(u.samples, r)[None, None, :]
        loss, _ = _loss(frozen, x, [_layout(u.cuts, 0, x.shape[-1], r)])
        vals.append(loss.item())
    return float(np.mean(vals))


def train_codec(manifest, detector, cfg, steps=500, seed=0, out=None, log_every=50):
    """Train from ``seed``; returns a :class:`CodecTrainResult` and optionally writes a checkpoint.

    Raises ``FloatingPointError`` naming the step if the loss stops being finite.
    """
    utts = _prepare(read_manifest(manifest), detector, cfg)
    train, held = split_heldout(utts)
    align = int(np.lcm(cfg.downsample_ratio, detector.cfg.downsample_ratio))
    crop = min(cfg.crop_samples, min(len(u.samples) for u in train))
    crop -= crop % align
    if crop < align:
        raise ValueError("utterances shorter than one detector frame")
    codec = Codec.init(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    opt = nd.Adam(codec.params.values(), lr=cfg.lr, betas=(0.9, 0.99))
    result = CodecTrainResult(codec)
    result.heldout_initial = heldout_loss(codec, held)
    for step in range(1, steps + 1):
        picks = rng.integers(0, len(train), size=cfg.batch_size)
        xs, layouts = [], []
        for i in picks:
            seg, start = _crop(train[i], crop, align, rng)
            xs.append(seg)
            layouts.append(_layout(train[i].cuts, start, crop, cfg.downsample_ratio))
        x = np.stack(xs)[:, None, :]
        opt.zero_grad()
        loss, pre = _loss(codec, x, layouts)
        nd.check_finite(loss, f"codec loss at step {step}")
        loss.backward()
        opt.step()
        if codec.vq is not None:
            codec.vq.ema_update(pre.data, rng)
        result.history.append((step, loss.item()))
        if log_every and step % log_every == 0:
            log.info("codec step %d loss %.4f", step, loss.item())
    result.heldout_final = heldout_loss(codec, held)
    if out is not None:
        codec.save(Path(out))
    return result
