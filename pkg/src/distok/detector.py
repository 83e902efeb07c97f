"""Self-supervised boundary detector.

A strided CNN maps raw audio to one latent frame per ``prod(strides)``
samples. Training is contrastive: each frame must pick its successor out of
a handful of frames drawn from elsewhere in the same utterance. At inference
the dissimilarity ``1 - cos(z_t, z_{t+1})`` is min-max normalised and its
prominent interior peaks become segment boundaries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import ndgrad as nd
from .audio import AudioBuffer, CANONICAL_RATE, resample_linear
from .corpus import load_audio, read_manifest
from .ndgrad import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectorConfig:
    kernel_sizes: tuple = (10, 8, 8, 4, 4)
    strides: tuple = (5, 4, 4, 2, 2)
    embed_dim: int = 64
    proj_dim: int = 64
    alpha: float = 1.0
    tau: float = 0.1
    pred_steps: int = 1
    n_negatives: int = 10
    prominence: float = 0.01
    distance: int | None = None
    width: float | None = None
    batch_size: int = 4
    crop_samples: int = 48000
    lr: float = 1e-3
    flat_tolerance: float = 1e-9

    def __post_init__(self):
        if len(self.kernel_sizes) != len(self.strides):
            raise ValueError("kernel_sizes and strides must have the same length")
        if min(self.kernel_sizes) < 1 or min(self.strides) < 1:
            raise ValueError("kernel sizes and strides must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))

    @property
    def downsample_ratio(self):
        return int(np.prod(self.strides))


FULL_SCALE_DETECTOR = DetectorConfig(embed_dim=256, proj_dim=64, batch_size=80, lr=2e-4)


@dataclass(frozen=True)
class BoundarySet:
    indices: tuple
    n_frames: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"boundaries must be strictly increasing: {idx}")
        if idx and (idx[0] <= 0 or idx[-1] >= self.n_frames):
            raise ValueError(f"boundaries must lie strictly inside (0, {self.n_frames}): {idx}")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


# -- model ------------------------------------------------------------------------
def _same_padding(length, kernel, stride):
    out = -(-length // stride)
    total = max(0, (out - 1) * stride + kernel - length)
    return total // 2, total - total // 2


def init_params(cfg, rng):
    params = {}
    cin = 1
    for i, k in enumerate(cfg.kernel_sizes):
        params[f"conv{i}.weight"] = Tensor(nd.near_orthogonal((cfg.embed_dim, cin, k), rng), True)
        params[f"conv{i}.bias"] = Tensor(np.zeros(cfg.embed_dim), True)
        params[f"norm{i}.gain"] = Tensor(np.ones(cfg.embed_dim), True)
        params[f"norm{i}.shift"] = Tensor(np.zeros(cfg.embed_dim), True)
        cin = cfg.embed_dim
    params["proj.weight"] = Tensor(nd.near_orthogonal((cfg.proj_dim, cfg.embed_dim, 1), rng), True)
    params["proj.bias"] = Tensor(np.zeros(cfg.proj_dim), True)
    return params


def forward(params, cfg, x):
    """Latent frames ``[B, proj_dim, ceil(S / ratio)]`` for raw audio ``x[B, 1, S]``."""
    h = x if isinstance(x, Tensor) else Tensor(x)
    for i, (k, s) in enumerate(zip(cfg.kernel_sizes, cfg.strides)):
        pad = _same_padding(h.shape[-1], k, s)
        h = nd.conv1d(h, params[f"conv{i}.weight"], params[f"conv{i}.bias"], stride=s, padding=pad)
        h = nd.leaky_relu(nd.channel_norm(h, params[f"norm{i}.gain"], params[f"norm{i}.shift"]))
    return nd.conv1d(h, params["proj.weight"], params["proj.bias"])


@dataclass
class Detector:
    cfg: DetectorConfig
    params: dict

    @classmethod
    def init(cls, cfg, seed=0):
        return cls(cfg, init_params(cfg, np.random.default_rng(seed)))

    def state(self):
        out = {k: v.data for k, v in self.params.items()}
        out["meta.downsample_ratio"] = np.array(float(self.cfg.downsample_ratio))
        return out

    def save(self, path):
        nd.checkpoint.save(self.state(), path)

    @classmethod
    def load(cls, path, cfg=None):
        return cls.from_state(nd.checkpoint.load(path), cfg)

    @classmethod
    def from_state(cls, state, cfg=None):
        cfg = cfg or DetectorConfig()
        ratio = int(state.pop("meta.downsample_ratio", cfg.downsample_ratio))
        if ratio != cfg.downsample_ratio:
            raise ValueError(f"checkpoint downsample ratio {ratio} != config {cfg.downsample_ratio}")
        expected = init_params(cfg, np.random.default_rng(0))
        if set(expected) != set(state):
            raise ValueError("checkpoint parameters do not match the detector config")
        for name, t in expected.items():
            if t.shape != state[name].shape:
                raise ValueError(f"{name}: checkpoint shape {state[name].shape} != config {t.shape}")
        return cls(cfg, {k: Tensor(state[k], True) for k in expected})

    def embed(self, audio):
        return detector_forward(audio, self)


def detector_forward(audio, detector):
    """Latent sequence ``[D, T]`` (numpy) for one utterance."""
    cfg = detector.cfg
    if isinstance(audio, AudioBuffer):
        audio = resample_linear(audio, CANONICAL_RATE).samples
    x = np.asarray(audio, dtype=np.float64)
    if len(x) < cfg.downsample_ratio:
        raise ValueError(f"audio too short: {len(x)} samples < {cfg.downsample_ratio}")
    return forward(_frozen(detector.params), cfg, x[None, None, :]).data[0]


def _frozen(params):
    return {k: Tensor(v.data) for k, v in params.items()}


# -- scores and loss ----------------------------------------------------------------
def similarity_scores(z, k=1, alpha=1.0):
    """``-alpha * cos(z_t, z_{t+k})`` for every valid ``t``; ``z`` is ``[D, T]``."""
    z = np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64)
    if not 1 <= k < z.shape[1]:
        raise ValueError(f"need 1 <= k < T, got k={k}, T={z.shape[1]}")
    zn = z / (np.linalg.norm(z, axis=0, keepdims=True) + nd.tensor.NORM_EPS)
    return -alpha * (zn[:, :-k] * zn[:, k:]).sum(axis=0)


def contrastive_loss(positives, negatives, tau):
    """Mean of ``-log(e^{s+/tau} / (e^{s+/tau} + sum_n e^{s_n/tau}))`` over anchors.

    ``positives`` is ``[A]`` and ``negatives`` ``[A, N]``; both may be tensors.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    pos = positives if isinstance(positives, Tensor) else Tensor(positives)
    neg = negatives if isinstance(negatives, Tensor) else Tensor(negatives)
    if pos.ndim != 1 or neg.ndim != 2 or neg.shape[0] != pos.shape[0] or neg.shape[1] < 1:
        raise ValueError("need positives [A] and negatives [A, N>=1]")
    logits = nd.concat([pos.reshape(-1, 1), neg], axis=1) * (1.0 / tau)
    return nd.softmax_cross_entropy(logits, np.zeros(pos.shape[0], dtype=np.int64))


def draw_negatives(n_frames, anchors, n, k, rng):
    """Uniform draws without replacement, excluding frames within ``k`` of each anchor."""
    anchors = np.asarray(anchors, dtype=np.int64)
    eligible = n_frames - (np.minimum(anchors + k, n_frames - 1) - np.maximum(anchors - k, 0) + 1)
    if np.any(eligible < n):
        raise ValueError(f"insufficient frames: need {n} negatives, only {int(eligible.min())} eligible")
    keys = rng.random((len(anchors), n_frames))
    frames = np.arange(n_frames)
    keys[np.abs(frames[None, :] - anchors[:, None]) <= k] = np.inf
    return np.argsort(keys, axis=1, kind="stable")[:, :n]


def sample_negatives(n_frames, anchor, n, rng, k=1, mode="within"):
    if mode != "within":
        raise ValueError(f"unsupported negative sampling mode {mode!r}; only 'within' is available")
    return draw_negatives(n_frames, [anchor], n, k, rng)[0]


def batch_contrastive_loss(z, cfg, rng):
    """Contrastive loss over all anchors of ``z[B, D, T]`` with in-utterance negatives."""
    B, D, T = z.shape
    k = cfg.pred_steps
    zn = nd.l2_normalize(nd.transpose(z, (0, 2, 1)), axis=-1).reshape(B * T, D)
    anchors = np.arange(T - k)
    a_idx, p_idx, n_idx = [], [], []
    for b in range(B):
        a_idx.append(b * T + anchors)
        p_idx.append(b * T + anchors + k)
        n_idx.append(b * T + draw_negatives(T, anchors, cfg.n_negatives, k, rng))
    a_idx, p_idx, n_idx = map(np.concatenate, (a_idx, p_idx, n_idx))
    za = nd.take(zn, a_idx)
    pos = nd.tsum(za * nd.take(zn, p_idx), axis=-1) * cfg.alpha
    neg = nd.matmul(nd.take(zn, n_idx), za.reshape(len(a_idx), D, 1)).reshape(len(a_idx), -1)
    return contrastive_loss(pos, neg * cfg.alpha, cfg.tau)


# -- peak picking ---------------------------------------------------------------------
def local_maxima(x):
    """Interior local maxima; a flat top counts once, at its (left-)middle sample."""
    x = np.asarray(x, dtype=np.float64)
    peaks, i, n = [], 1, len(x)
    while i < n - 1:
        if x[i - 1] < x[i]:
            ahead = i + 1
            while ahead < n - 1 and x[ahead] == x[i]:
                ahead += 1
            if x[ahead] < x[i]:
                peaks.append((i + ahead - 1) // 2)
                i = ahead
        i += 1
    return np.asarray(peaks, dtype=np.int64)


def peak_prominences(x, peaks):
    """Topographic prominence and the left/right base indices of each peak."""
    x = np.asarray(x, dtype=np.float64)
    prom = np.empty(len(peaks))
    left_bases = np.empty(len(peaks), dtype=np.int64)
    right_bases = np.empty(len(peaks), dtype=np.int64)
    for j, p in enumerate(peaks):
        i, lmin, lbase = p, x[p], p
        while i >= 0 and x[i] <= x[p]:
            if x[i] < lmin:
                lmin, lbase = x[i], i
            i -= 1
        i, rmin, rbase = p, x[p], p
        while i < len(x) and x[i] <= x[p]:
            if x[i] < rmin:
                rmin, rbase = x[i], i
            i += 1
        prom[j] = x[p] - max(lmin, rmin)
        left_bases[j], right_bases[j] = lbase, rbase
    return prom, left_bases, right_bases


def _peak_widths(x, peaks, prom, left_bases, right_bases, rel_height=0.5):
    widths = np.empty(len(peaks))
    for j, p in enumerate(peaks):
        h = x[p] - prom[j] * rel_height
        i = p
        while left_bases[j] < i and h < x[i]:
            i -= 1
        left = float(i)
        if x[i] < h:
            left += (h - x[i]) / (x[i + 1] - x[i])
        i = p
        while i < right_bases[j] and h < x[i]:
            i += 1
        right = float(i)
        if x[i] < h:
            right -= (h - x[i]) / (x[i - 1] - x[i])
        widths[j] = right - left
    return widths


def _select_by_distance(x, peaks, distance):
    keep = np.ones(len(peaks), dtype=bool)
    for j in np.argsort(-x[peaks], kind="stable"):
        if not keep[j]:
            continue
        k = j - 1
        while k >= 0 and peaks[j] - peaks[k] < distance:
            keep[k] = False
            k -= 1
        k = j + 1
        while k < len(peaks) and peaks[k] - peaks[j] < distance:
            keep[k] = False
            k += 1
    return peaks[keep]


def find_peaks(x, prominence=0.0, distance=None, width=None):
    """Interior local maxima filtered by distance, then prominence, then width."""
    x = np.asarray(x, dtype=np.float64)
    peaks = local_maxima(x)
    if distance is not None and len(peaks) > 1:
        peaks = _select_by_distance(x, peaks, distance)
    prom, lb, rb = peak_prominences(x, peaks)
    keep = prom >= prominence
    peaks, prom, lb, rb = peaks[keep], prom[keep], lb[keep], rb[keep]
    if width is not None and len(peaks):
        peaks = peaks[_peak_widths(x, peaks, prom, lb, rb) >= width]
    return peaks


def dissimilarity_trace(z):
    """``1 - cos(z_t, z_{t+1})`` for ``z[D, T]``, length ``T - 1``."""
    return 1.0 + similarity_scores(z, 1, 1.0)


def boundaries_from_trace(trace, n_frames, cfg=DetectorConfig()):
    """Boundary frames from a dissimilarity trace.

    Entry ``t`` of the trace compares frames ``t`` and ``t+1``, so a peak there
    opens a new segment at frame ``t+1``.
    """
    trace = np.asarray(trace, dtype=np.float64)
    lo, hi = trace.min(initial=0.0), trace.max(initial=0.0)
    if len(trace) < 3 or hi - lo <= cfg.flat_tolerance:
        return BoundarySet((), n_frames)
    norm = (trace - lo) / (hi - lo)
    peaks = find_peaks(norm, cfg.prominence, cfg.distance, cfg.width)
    return BoundarySet(tuple(int(p) + 1 for p in peaks), n_frames)


def detect_boundaries(audio, detector):
    z = detector_forward(audio, detector)
    if z.shape[1] < 2:
        raise ValueError("audio shorter than two detector frames")
    return boundaries_from_trace(dissimilarity_trace(z), z.shape[1], detector.cfg)


def boundary_f1(predicted, reference, tolerance=2):
    """F1 of one-to-one matches within ``tolerance`` frames (greedy by distance)."""
    pred, ref = list(predicted), list(reference)
    if not pred and not ref:
        return 1.0
    pairs = sorted((abs(p - r), i, j) for i, p in enumerate(pred) for j, r in enumerate(ref)
                   if abs(p - r) <= tolerance)
    used_p, used_r, hits = set(), set(), 0
    for _, i, j in pairs:
        if i not in used_p and j not in used_r:
            used_p.add(i)
            used_r.add(j)
            hits += 1
    if hits == 0:
        return 0.0
    precision, recall = hits / len(pred), hits / len(ref)
    return 2 * precision * recall / (precision + recall)


# -- training ------------------------------------------------------------------------
@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)  # (step, train_loss)
    heldout_initial: float = float("nan")
    heldout_final: float = float("nan")


def split_heldout(items, every=5):
    """Deterministic split: every ``every``-th item (from the last) is held out."""
    held = [x for i, x in enumerate(items) if (len(items) - 1 - i) % every == 0]
    train = [x for i, x in enumerate(items) if (len(items) - 1 - i) % every != 0]
    return (train or held), held


def _crop_batch(waves, size, rng, batch_size):
    picks = rng.integers(0, len(waves), size=batch_size)
    batch = np.zeros((batch_size, 1, size))
    for b, w in enumerate(picks):
        x = waves[w]
        start = int(rng.integers(0, len(x) - size + 1)) if len(x) > size else 0
        seg = x[start:start + size]
        batch[b, 0, :len(seg)] = seg
    return batch


def heldout_loss(detector, waves, seed=1234):
    rng = np.random.default_rng(seed)
    losses = []
    params = _frozen(detector.params)
    for x in waves:
        z = forward(params, detector.cfg, x[None, None, :])
        losses.append(batch_contrastive_loss(z, detector.cfg, rng).item())
    return float(np.mean(losses))


def train_detector(manifest, cfg=DetectorConfig(), steps=200, seed=0, out=None, log_every=25):
    """Train on a manifest of WAVs; returns a :class:`TrainResult` and optionally writes a checkpoint."""
    paths = read_manifest(manifest)
    waves = [load_audio(p).samples for p in paths]
    train, held = split_heldout(waves)
    crop = min(cfg.crop_samples, min(len(w) for w in train))
    crop -= crop % cfg.downsample_ratio
    if crop < cfg.downsample_ratio * (cfg.n_negatives + 2 * cfg.pred_steps + 2):
        raise ValueError("utterances too short for the configured number of negatives")
    cfg = replace(cfg, crop_samples=crop)
    det = Detector.init(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    opt = nd.Adam(det.params.values(), lr=cfg.lr, betas=(0.9, 0.99))
    result = TrainResult(det)
    result.heldout_initial = heldout_loss(det, held)
    for step in range(1, steps + 1):
        batch = _crop_batch(train, crop, rng, cfg.batch_size)
        opt.zero_grad()
        loss = batch_contrastive_loss(forward(det.params, cfg, batch), cfg, rng)
        nd.check_finite(loss, "detector loss")
        loss.backward()
        opt.step()
        result.history.append((step, loss.item()))
        if log_every and step % log_every == 0:
            log.info("detector step %d loss %.4f", step, loss.item())
    result.heldout_final = heldout_loss(det, held)
    if out is not None:
        det.save(Path(out))
    return result
