"""Encoder/decoder stacks, segment bottleneck, and the encode/decode pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import ndgrad as nd
from ..audio import CANONICAL_RATE, AudioBuffer, resample_linear
from ..detector import detect_boundaries
from ..ndgrad import Tensor
from ..quant import (
    VARIANTS,
    GsqParams,
    QuantizerSpec,
    VectorQuantizer,
    compose_tokens,
    decompose_tokens,
    fsq_dequantize,
    gsq_many_to_many_ste,
    gsq_many_to_one_decode,
    gsq_many_to_one_ste,
)
from ..segmenter import SegmentLayout, dfd_expand, dfe_compress, init_autoencoder, reassemble
from .stream import StreamFormatError, TokenStream

N_RESBLOCKS = 2
COMMITMENT = 0.25


@dataclass(frozen=True)
class CodecConfig:
    enc_strides: tuple = (4, 4, 2, 2)
    base_channels: int = 8
    latent_dim: int = 64
    quantizer: QuantizerSpec = field(default_factory=QuantizerSpec)
    time_l1_weight: float = 500.0
    mel_weights: tuple = (45.0, 1.0, 1.0, 1.0)
    mel_n_ffts: tuple = (1024, 512, 256, 128)
    mel_n_mels: tuple = (80, 40, 20, 10)
    sample_rate: int = CANONICAL_RATE
    lr: float = 1e-3
    batch_size: int = 4
    crop_samples: int = 16000

    def __post_init__(self):
        object.__setattr__(self, "enc_strides", tuple(int(s) for s in self.enc_strides))
        if not self.enc_strides or min(self.enc_strides) < 1:
            raise ValueError("enc_strides must be a non-empty list of positive integers")
        if self.quantizer_dim > self.latent_dim:
            raise ValueError(f"quantizer_dim {self.quantizer_dim} exceeds latent_dim {self.latent_dim}")
        if not len(self.mel_weights) == len(self.mel_n_ffts) == len(self.mel_n_mels):
            raise ValueError("mel weights, FFT sizes and mel counts must have equal length")

    @property
    def downsample_ratio(self):
        return int(np.prod(self.enc_strides))

    @property
    def quantizer_dim(self):
        return self.quantizer.input_dim


FULL_SCALE_CODEC = CodecConfig(
    enc_strides=(8, 5, 4, 2), base_channels=32, latent_dim=1024,
    quantizer=QuantizerSpec("gsq_m2o", 16, 4, 72), batch_size=9,
)


# -- parameters --------------------------------------------------------------------------
def _conv_param(params, name, shape, rng):
    params[f"{name}.weight"] = Tensor(nd.near_orthogonal(shape, rng), True)
    params[f"{name}.bias"] = Tensor(np.zeros(shape[1] if name.startswith("dec.up") else shape[0]), True)


def _channels(cfg):
    return [cfg.base_channels * 2 ** i for i in range(len(cfg.enc_strides) + 1)]


def init_params(cfg, rng):
    p = {}
    ch = _channels(cfg)
    _conv_param(p, "enc.in", (ch[0], 1, 7), rng)
    for i, s in enumerate(cfg.enc_strides):
        _conv_param(p, f"enc.down{i}", (ch[i + 1], ch[i], 2 * s), rng)
    top = ch[-1]
    for side in ("enc", "dec"):
        for r in range(N_RESBLOCKS):
            _conv_param(p, f"{side}.res{r}.a", (top // 2, top, 3), rng)
            _conv_param(p, f"{side}.res{r}.b", (top, top // 2, 1), rng)
    _conv_param(p, "enc.out", (cfg.latent_dim, top, 3), rng)
    _conv_param(p, "proj.down", (cfg.quantizer_dim, cfg.latent_dim, 1), rng)
    p.update(init_autoencoder(cfg.quantizer_dim, cfg.quantizer_dim, rng, prefix="seg"))
    _conv_param(p, "proj.up", (cfg.latent_dim, cfg.quantizer_dim, 1), rng)
    _conv_param(p, "dec.in", (top, cfg.latent_dim, 7), rng)
    for j, i in enumerate(reversed(range(len(cfg.enc_strides)))):
        s = cfg.enc_strides[i]
        _conv_param(p, f"dec.up{j}", (ch[i + 1], ch[i], 2 * s), rng)
    _conv_param(p, "dec.out", (1, ch[0], 7), rng)
    spec = cfg.quantizer
    if spec.variant == "gsq_m2o":
        gsq = GsqParams.init(spec, rng)
        p["quant.compress"], p["quant.expand"] = gsq.compress, gsq.expand
    return p


def _conv(x, p, name, stride=1, padding=0):
    return nd.conv1d(x, p[f"{name}.weight"], p[f"{name}.bias"], stride=stride, padding=padding)


def _resblock(x, p, name):
    h = _conv(nd.leaky_relu(x), p, f"{name}.a", padding=1)
    return x + _conv(nd.leaky_relu(h), p, f"{name}.b")


def encoder(p, cfg, x):
    """``x[B, 1, S]`` with ``S`` a multiple of the ratio to ``[B, D, S / ratio]``."""
    h = _conv(x, p, "enc.in", padding=3)
    for i, s in enumerate(cfg.enc_strides):
        h = _conv(nd.leaky_relu(h), p, f"enc.down{i}", stride=s, padding=((s + 1) // 2, s // 2))
    for r in range(N_RESBLOCKS):
        h = _resblock(h, p, f"enc.res{r}")
    return _conv(nd.leaky_relu(h), p, "enc.out", padding=1)


def decoder(p, cfg, e):
    """``[B, D, T]`` latents to ``[B, 1, T * ratio]`` waveform."""
    h = _conv(e, p, "dec.in", padding=3)
    for r in range(N_RESBLOCKS):
        h = _resblock(h, p, f"dec.res{r}")
    for j, s in enumerate(reversed(cfg.enc_strides)):
        n = h.shape[-1]
        h = nd.conv_transpose1d(nd.leaky_relu(h), p[f"dec.up{j}.weight"], p[f"dec.up{j}.bias"], stride=s)
        lo = (s + 1) // 2
        h = h[:, :, lo:lo + n * s]
    return _conv(nd.leaky_relu(h), p, "dec.out", padding=3)


def feature_decrease(p, e):
    return _conv(e, p, "proj.down")


def feature_increase(p, q):
    return _conv(q, p, "proj.up")


# -- quantizer wrapper -----------------------------------------------------------------------
def quantize_vectors(codec, v):
    """``v[M, H]`` tensor to ``(v_hat[M, H], digits[M, n_digits])``; gradients pass straight through."""
    spec = codec.cfg.quantizer
    if spec.variant == "gsq_m2o":
        return gsq_many_to_one_ste(v, spec, codec.gsq)
    if spec.variant == "vq":
        v_hat, idx = codec.vq.quantize_ste(v)
        return v_hat, idx.reshape(len(idx), -1)
    v_hat, idx = gsq_many_to_many_ste(v, spec)
    return v_hat, idx.reshape(len(idx), -1)


def dequantize_digits(codec, digits):
    spec = codec.cfg.quantizer
    digits = np.asarray(digits, dtype=np.int64)
    if spec.variant == "gsq_m2o":
        return gsq_many_to_one_decode(digits, spec, codec.gsq)
    if spec.variant == "vq":
        return Tensor(codec.vq.decode(digits))
    return Tensor(fsq_dequantize(digits, spec.levels))


# -- the model object --------------------------------------------------------------------------
def _meta(cfg):
    q = cfg.quantizer
    return {
        "meta.downsample_ratio": np.array(float(cfg.downsample_ratio)),
        "meta.enc_strides": np.array(cfg.enc_strides, dtype=np.float64),
        "meta.quantizer": np.array([VARIANTS.index(q.variant), q.levels, q.groups, q.input_dim,
                                    q.codebook_size], dtype=np.float64),
        "meta.sample_rate": np.array(float(cfg.sample_rate)),
    }


@dataclass
class Codec:
    cfg: CodecConfig
    params: dict
    vq: VectorQuantizer | None = None

    @classmethod
    def init(cls, cfg, seed=0):
        rng = np.random.default_rng(seed)
        params = init_params(cfg, rng)
        vq = None
        if cfg.quantizer.variant == "vq":
            q = cfg.quantizer
            vq = VectorQuantizer.init(q.codebook_size, q.input_dim, rng, depth=q.groups, scale=0.1)
        return cls(cfg, params, vq)

    @property
    def gsq(self):
        return GsqParams(self.params["quant.compress"], self.params["quant.expand"])

    def trainable(self):
        return self.params

    def state(self):
        out = {k: v.data for k, v in self.params.items()}
        if self.vq is not None:
            out["quant.codebooks"] = self.vq.codebooks
        out.update(_meta(self.cfg))
        return out

    def save(self, path):
        nd.checkpoint.save(self.state(), path)

    @classmethod
    def load(cls, path, cfg=None):
        return cls.from_state(nd.checkpoint.load(path), cfg)

    @classmethod
    def from_state(cls, state, cfg=None):
        """Rebuild from a checkpoint dict; ``cfg`` (if given) must agree with the stored metadata."""
        state = dict(state)
        try:
            strides = tuple(int(s) for s in state.pop("meta.enc_strides"))
            ratio = int(state.pop("meta.downsample_ratio"))
            qv = [int(v) for v in state.pop("meta.quantizer")]
            rate = int(state.pop("meta.sample_rate"))
        except KeyError as exc:
            raise ValueError(f"codec checkpoint lacks metadata {exc}") from None
        spec = QuantizerSpec(VARIANTS[qv[0]], qv[1], qv[2], qv[3], qv[4])
        if cfg is None:
            top = state["enc.res0.b.weight"].shape[0]
            cfg = CodecConfig(enc_strides=strides, base_channels=top // 2 ** len(strides),
                              latent_dim=state["enc.out.weight"].shape[0], quantizer=spec, sample_rate=rate)
        if ratio != cfg.downsample_ratio:
            raise ValueError(f"checkpoint downsample ratio {ratio} != config {cfg.downsample_ratio}")
        if spec != cfg.quantizer:
            raise ValueError(f"checkpoint quantizer {spec} != config {cfg.quantizer}")
        codebooks = state.pop("quant.codebooks", None)
        expected = init_params(cfg, np.random.default_rng(0))
        if set(expected) != set(state):
            missing = sorted(set(expected) ^ set(state))
            raise ValueError(f"checkpoint parameters do not match the codec config: {missing[:4]}")
        for name, t in expected.items():
            if t.shape != state[name].shape:
                raise ValueError(f"{name}: checkpoint shape {state[name].shape} != config {t.shape}")
        vq = VectorQuantizer(codebooks) if spec.variant == "vq" else None
        return cls(cfg, {k: Tensor(state[k], True) for k in expected}, vq)

    def frozen(self):
        return replace(self, params={k: Tensor(v.data) for k, v in self.params.items()})


# -- differentiable forward through the bottleneck ----------------------------------------------------
def bottleneck(codec, q_feats, layouts):
    """Segment-compress, quantize, and expand ``q_feats[B, H, T]``.

    Returns ``(reassembled[B, H, T], digits[M, n_digits], pre_quant[M, H])``
    where ``M`` counts segments over the whole batch.
    """
    p = codec.params
    vectors, spans = [], []
    for b, layout in enumerate(layouts):
        row = q_feats[b]
        for s, e in layout.records:
            vectors.append(dfe_compress(row[:, s:e], p).reshape(1, -1))
            spans.append(e - s)
    v = nd.concat(vectors, axis=0)
    v_hat, digits = quantize_vectors(codec, v)
    out, k = [], 0
    for layout in layouts:
        segs = []
        for n in layout.lengths:
            segs.append(dfd_expand(v_hat[k].reshape(-1, 1), n, p))
            k += 1
        h = reassemble(segs, layout)
        out.append(h.reshape(1, *h.shape))
    return nd.concat(out, axis=0), digits, v


def forward(codec, x, layouts):
    """Full differentiable pass for a batch ``x[B, 1, S]``; returns ``(x_hat, digits, pre_quant)``."""
    p = codec.params
    q = feature_decrease(p, encoder(p, codec.cfg, x))
    h, digits, pre = bottleneck(codec, q, layouts)
    return decoder(p, codec.cfg, feature_increase(p, h)), digits, pre


# -- encode / decode --------------------------------------------------------------------------------
def map_boundaries(det_frames, det_ratio, codec_ratio, n_frames):
    """Convert detector frame indices to codec frame indices by time; dedupes and drops edges."""
    out = sorted({int(round(b * det_ratio / codec_ratio)) for b in det_frames})
    return [b for b in out if 0 < b < n_frames]


def pad_to_ratio(samples, ratio):
    n = len(samples)
    target = -(-n // ratio) * ratio
    return np.concatenate([samples, np.zeros(target - n)]) if target > n else np.asarray(samples)


def _as_samples(audio, rate):
    if isinstance(audio, AudioBuffer):
        return resample_linear(audio, rate).samples
    return np.asarray(audio, dtype=np.float64)


def encode(audio, detector, codec, boundaries=None):
    """Tokenize one utterance into a :class:`TokenStream`.

    ``boundaries`` (detector frames) overrides running ``detector`` when given.
    """
    cfg = codec.cfg
    x = _as_samples(audio, cfg.sample_rate)
    if len(x) == 0:
        raise ValueError("cannot encode an empty utterance")
    r = cfg.downsample_ratio
    padded = pad_to_ratio(x, r)
    n_frames = len(padded) // r
    if boundaries is None:
        det_ratio = detector.cfg.downsample_ratio
        det_in = pad_to_ratio(x, det_ratio)
        boundaries = detect_boundaries(det_in, detector).indices
    else:
        det_ratio = detector.cfg.downsample_ratio if detector is not None else r
    cuts = map_boundaries(boundaries, det_ratio, r, n_frames)
    layout = SegmentLayout.from_boundaries(cuts, n_frames)
    frozen = codec.frozen()
    p = frozen.params
    q = feature_decrease(p, encoder(p, cfg, Tensor(padded[None, None, :])))
    vectors = [dfe_compress(q[0][:, s:e], p).reshape(1, -1) for s, e in layout.records]
    _, digits = quantize_vectors(frozen, nd.concat(vectors, axis=0))
    tokens = compose_tokens(digits, cfg.quantizer.radix)
    records = tuple((int(n), int(t)) for n, t in zip(layout.lengths, tokens))
    return TokenStream(cfg.sample_rate, r, cfg.quantizer, len(x), records)


def decode(stream, codec):
    """Reconstruct the waveform (``stream.sample_count`` samples) from tokens and segment lengths alone."""
    cfg = codec.cfg
    if stream.downsample_ratio != cfg.downsample_ratio:
        raise ValueError(f"stream ratio {stream.downsample_ratio} != codec ratio {cfg.downsample_ratio}")
    if stream.spec != cfg.quantizer:
        raise ValueError(f"stream quantizer {stream.spec} != codec quantizer {cfg.quantizer}")
    stream.validate()
    if not stream.records:
        return AudioBuffer(np.zeros(0), stream.sample_rate)
    spec = cfg.quantizer
    digits = decompose_tokens(np.array(stream.tokens, dtype=np.int64), spec.radix, spec.n_digits)
    frozen = codec.frozen()
    p = frozen.params
    if spec.variant != "gsq_m2o" and spec.variant != "vq":
        digits = digits.reshape(len(digits), -1)
    v_hat = dequantize_digits(frozen, digits)
    if v_hat.ndim == 1:
        v_hat = v_hat.reshape(1, -1)
    layout = SegmentLayout.from_lengths(stream.lengths)
    segs = [dfd_expand(v_hat[i].reshape(-1, 1), n, p) for i, n in enumerate(layout.lengths)]
    h = reassemble(segs, layout)
    wave = decoder(p, cfg, feature_increase(p, h.reshape(1, *h.shape))).data[0, 0]
    if len(wave) < stream.sample_count:
        raise StreamFormatError("segment lengths cover fewer samples than the header declares")
    return AudioBuffer(wave[:stream.sample_count], stream.sample_rate)
