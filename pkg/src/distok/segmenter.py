"""Variable-length segmentation of latent sequences and per-segment autoencoding.

``partition`` cuts ``[D, T]`` features at boundary frames. The segment encoder
(conv, act, conv, act, mean-pool) turns any segment into one ``[H, 1]``
vector; the decoder replicates that vector back to the segment length and
refines it with two more convolutions. ``reassemble`` concatenates in layout
order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import ndgrad as nd
from .ndgrad import Tensor


@dataclass(frozen=True)
class SegmentLayout:
    records: tuple  # ((start, end), ...) half-open
    n_frames: int

    def __post_init__(self):
        recs = tuple((int(s), int(e)) for s, e in self.records)
        if self.n_frames < 1 or not recs:
            raise ValueError("layout needs at least one frame and one record")
        if recs[0][0] != 0 or recs[-1][1] != self.n_frames:
            raise ValueError(f"records must tile [0, {self.n_frames})")
        for s, e in recs:
            if e <= s:
                raise ValueError(f"empty segment [{s}, {e})")
        for (_, e), (s, _) in zip(recs, recs[1:]):
            if s != e:
                raise ValueError(f"records are not contiguous at frame {e}")
        object.__setattr__(self, "records", recs)

    @property
    def lengths(self):
        return [e - s for s, e in self.records]

    def __len__(self):
        return len(self.records)

    @classmethod
    def from_lengths(cls, lengths):
        ends = np.cumsum([int(n) for n in lengths])
        starts = np.concatenate([[0], ends[:-1]])
        return cls(tuple(zip(starts.tolist(), ends.tolist())), int(ends[-1]) if len(ends) else 0)

    @classmethod
    def from_boundaries(cls, boundaries, n_frames):
        cuts = clean_boundaries(boundaries, n_frames)
        edges = [0, *cuts, n_frames]
        return cls(tuple(zip(edges[:-1], edges[1:])), n_frames)


def clean_boundaries(boundaries, n_frames):
    """Validate boundary frames; ones sitting exactly on 0 or ``n_frames`` are dropped with a warning."""
    cuts = [int(b) for b in boundaries]
    edge = [b for b in cuts if b in (0, n_frames)]
    if edge:
        warnings.warn(f"dropping boundaries on the sequence edges: {edge}", stacklevel=3)
        cuts = [b for b in cuts if b not in (0, n_frames)]
    bad = [b for b in cuts if not 0 < b < n_frames]
    if bad:
        raise ValueError(f"boundaries outside (0, {n_frames}): {bad}")
    if any(b <= a for a, b in zip(cuts, cuts[1:])):
        raise ValueError(f"boundaries must be strictly increasing: {cuts}")
    return cuts


def partition(features, boundaries):
    """Split ``features[D, T]`` (array or tensor) at ``boundaries``; returns ``(segments, layout)``."""
    n_frames = features.shape[-1]
    layout = SegmentLayout.from_boundaries(boundaries, n_frames)
    return [features[..., s:e] for s, e in layout.records], layout


def reassemble(segments, layout):
    """Concatenate segments along time after checking them against ``layout``."""
    if len(segments) != len(layout):
        raise ValueError(f"{len(segments)} segments for a {len(layout)}-record layout")
    for i, (seg, n) in enumerate(zip(segments, layout.lengths)):
        if seg.shape[-1] != n:
            raise ValueError(f"segment {i} has length {seg.shape[-1]}, layout says {n}")
    if all(isinstance(s, Tensor) for s in segments):
        return nd.concat(segments, axis=-1)
    return np.concatenate([s.data if isinstance(s, Tensor) else s for s in segments], axis=-1)


# -- segment autoencoder -----------------------------------------------------------------
KERNEL = 3


def init_autoencoder(in_dim, hidden_dim, rng, prefix="seg"):
    shapes = {
        "enc_conv1": (hidden_dim, in_dim, KERNEL),
        "enc_conv2": (hidden_dim, hidden_dim, KERNEL),
        "dec_conv1": (hidden_dim, hidden_dim, KERNEL),
        "dec_conv2": (in_dim, hidden_dim, KERNEL),
    }
    params = {}
    for name, shape in shapes.items():
        params[f"{prefix}.{name}.weight"] = Tensor(nd.near_orthogonal(shape, rng), True)
        params[f"{prefix}.{name}.bias"] = Tensor(np.zeros(shape[0]), True)
    return params


def identity_autoencoder(dim, prefix="seg"):
    """Parameters whose convolutions pass features through unchanged (``H == D``)."""
    eye = np.zeros((dim, dim, KERNEL))
    eye[np.arange(dim), np.arange(dim), KERNEL // 2] = 1.0
    params = {}
    for name in ("enc_conv1", "enc_conv2", "dec_conv1", "dec_conv2"):
        params[f"{prefix}.{name}.weight"] = Tensor(eye.copy(), True)
        params[f"{prefix}.{name}.bias"] = Tensor(np.zeros(dim), True)
    return params


def _conv(x, params, name, prefix):
    return nd.conv1d(x, params[f"{prefix}.{name}.weight"], params[f"{prefix}.{name}.bias"],
                     padding=KERNEL // 2)


def _batched(x):
    x = x if isinstance(x, Tensor) else Tensor(x)
    return (x.reshape(1, *x.shape), True) if x.ndim == 2 else (x, False)


def dfe_compress(segment, params, prefix="seg"):
    """``[D, l]`` (or ``[B, D, l]``) segment to a ``[H, 1]`` vector."""
    x, squeeze = _batched(segment)
    if x.shape[-1] < 1:
        raise ValueError("segment must have at least one frame")
    h = nd.leaky_relu(_conv(x, params, "enc_conv1", prefix))
    h = nd.leaky_relu(_conv(h, params, "enc_conv2", prefix))
    out = nd.adaptive_avg_pool_to_1(h)
    return out.reshape(out.shape[1:]) if squeeze else out


def dfd_expand(token, length, params, prefix="seg"):
    """``[H, 1]`` vector back to a ``[D, length]`` segment."""
    if length < 1:
        raise ValueError(f"segment length must be >= 1, got {length}")
    x, squeeze = _batched(token)
    h = nd.nearest_upsample(x, int(length))
    h = nd.leaky_relu(_conv(h, params, "dec_conv1", prefix))
    out = _conv(h, params, "dec_conv2", prefix)
    return out.reshape(out.shape[1:]) if squeeze else out
