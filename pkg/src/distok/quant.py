"""Scalar, group-wise, and vector quantizers plus the composite-token bijection.

FSQ bounds each value with ``tanh`` and snaps it to ``L`` evenly spaced levels
on ``[-1, 1]``; ties at a midpoint go to the larger index. Group-wise scalar
quantization (GSQ) comes in two flavours:

* many-to-one: each group of ``H/G`` values is projected to one scalar by a
  learned row vector, FSQ-quantized, and expanded back by a learned column;
* many-to-many: each group is FSQ-quantized element-wise.

Tensor variants (``*_ste``) pass gradients straight through the rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ndgrad as nd
from .ndgrad import Tensor

VARIANTS = ("fsq", "gsq_m2o", "gsq_m2m", "vq")


@dataclass(frozen=True)
class QuantizerSpec:
    variant: str = "gsq_m2o"
    levels: int = 16
    groups: int = 4
    input_dim: int = 24
    codebook_size: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown quantizer variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "vq":
            if self.codebook_size < 1:
                raise ValueError("vq needs codebook_size >= 1")
            object.__setattr__(self, "levels", 2)  # unused by vq; pinned so specs compare by what matters
            return
        if self.levels < 2:
            raise ValueError(f"levels must be >= 2, got {self.levels}")
        if self.groups < 1 or self.input_dim % self.groups:
            raise ValueError(f"groups ({self.groups}) must divide input_dim ({self.input_dim})")

    @property
    def group_dim(self):
        return self.input_dim // self.groups

    @property
    def radix(self):
        """Base of one token digit."""
        return self.codebook_size if self.variant == "vq" else self.levels

    @property
    def n_digits(self):
        """Number of digits folded into one composite token."""
        if self.variant == "gsq_m2o":
            return self.groups
        if self.variant == "vq":
            return self.groups  # residual depth
        return self.input_dim

    @property
    def vocab_size(self):
        return self.radix ** self.n_digits

    @property
    def bits_per_token(self):
        return self.n_digits * bits_for(self.radix)


# -- FSQ ---------------------------------------------------------------------------
def fsq_grid(levels):
    return -1.0 + 2.0 * np.arange(levels) / (levels - 1)


def fsq_index(bounded, levels):
    """Nearest grid index for values already in ``[-1, 1]``; midpoints round up."""
    j = np.floor((np.asarray(bounded) + 1.0) * (levels - 1) / 2.0 + 0.5)
    return np.clip(j, 0, levels - 1).astype(np.int64)


def fsq_dequantize(indices, levels):
    return -1.0 + 2.0 * np.asarray(indices, dtype=np.float64) / (levels - 1)


def fsq_quantize(x, levels):
    """Return ``(values, indices)`` for every element of ``x``."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    idx = fsq_index(np.tanh(np.asarray(x, dtype=np.float64)), levels)
    return fsq_dequantize(idx, levels), idx


def fsq_ste(x, levels):
    """Tensor FSQ: forward snaps ``tanh(x)`` to the grid, backward is ``tanh'``."""
    bounded = nd.tanh(x)
    idx = fsq_index(bounded.data, levels)
    return nd.straight_through(bounded, fsq_dequantize(idx, levels)), idx


# -- GSQ many-to-one ------------------------------------------------------------------
@dataclass
class GsqParams:
    """Per-group compression rows ``compress[g]`` (``1 x H_g``) and expansion columns ``expand[g]``."""

    compress: Tensor
    expand: Tensor

    @classmethod
    def init(cls, spec, rng, gain=1.0):
        g, hg = spec.groups, spec.group_dim
        w = np.stack([nd.near_orthogonal((1, hg), rng, gain).reshape(hg) for _ in range(g)])
        v = np.stack([nd.near_orthogonal((hg, 1), rng, gain).reshape(hg) for _ in range(g)])
        return cls(Tensor(w, requires_grad=True), Tensor(v, requires_grad=True))

    @classmethod
    def identity(cls, spec):
        ones = np.ones((spec.groups, spec.group_dim))
        return cls(Tensor(ones.copy(), requires_grad=True), Tensor(ones, requires_grad=True))

    def parameters(self):
        return {"compress": self.compress, "expand": self.expand}


def _check_dim(shape, spec):
    if not shape or shape[-1] != spec.input_dim:
        raise ValueError(f"expected last dimension {spec.input_dim}, got shape {tuple(shape)}")


def gsq_many_to_one(z, spec, params):
    """Numpy many-to-one GSQ on the last axis; returns ``(z_hat, group_indices)``."""
    z = np.asarray(z, dtype=np.float64)
    _check_dim(z.shape, spec)
    g, hg = spec.groups, spec.group_dim
    groups = z.reshape(z.shape[:-1] + (g, hg))
    p = (groups * params.compress.data).sum(axis=-1)
    p_hat, idx = fsq_quantize(p, spec.levels)
    z_hat = p_hat[..., None] * params.expand.data
    return z_hat.reshape(z.shape), idx


def gsq_many_to_one_ste(z, spec, params):
    """Tensor many-to-one GSQ on ``z[N, H]``; returns ``(z_hat[N, H], indices[N, G])``."""
    _check_dim(z.shape, spec)
    n, g, hg = z.shape[0], spec.groups, spec.group_dim
    zg = nd.transpose(z.reshape(n, g, hg), (1, 0, 2))
    p = nd.matmul(zg, params.compress.reshape(g, hg, 1))
    p_hat, idx = fsq_ste(p, spec.levels)
    out = nd.matmul(p_hat, params.expand.reshape(g, 1, hg))
    return nd.transpose(out, (1, 0, 2)).reshape(n, spec.input_dim), idx.reshape(g, n).T


def gsq_many_to_one_decode(indices, spec, params):
    """Map ``indices[..., G]`` back to ``z_hat[..., H]`` (as a tensor, so decoders can train)."""
    idx = np.asarray(indices)
    p_hat = fsq_dequantize(idx, spec.levels)
    lead = idx.shape[:-1]
    flat = Tensor(p_hat.reshape(-1, spec.groups).T[:, :, None])
    out = nd.matmul(flat, params.expand.reshape(spec.groups, 1, spec.group_dim))
    return nd.transpose(out, (1, 0, 2)).reshape(lead + (spec.input_dim,))


# -- GSQ many-to-many -------------------------------------------------------------------
def gsq_many_to_many(z, spec):
    """Split into ``G`` chunks and FSQ each; returns ``(z_hat, indices[..., G, H_g])``."""
    z = np.asarray(z, dtype=np.float64)
    _check_dim(z.shape, spec)
    chunks = np.split(z, spec.groups, axis=-1)
    pairs = [fsq_quantize(c, spec.levels) for c in chunks]
    z_hat = np.concatenate([q for q, _ in pairs], axis=-1)
    return z_hat, np.stack([i for _, i in pairs], axis=-2)


def gsq_many_to_many_ste(z, spec):
    _check_dim(z.shape, spec)
    z_hat, idx = fsq_ste(z, spec.levels)
    return z_hat, idx.reshape(idx.shape[:-1] + (spec.groups, spec.group_dim))


# -- composite tokens ------------------------------------------------------------------------
def compose_token(digits, levels):
    """``sum(q_g * L**g)``: digit 0 is least significant."""
    value = 0
    for g, q in enumerate(digits):
        q = int(q)
        if not 0 <= q < levels:
            raise ValueError(f"digit {q} at position {g} outside [0, {levels})")
        value += q * levels ** g
    return value


def decompose_token(token, levels, n_digits):
    token = int(token)
    if not 0 <= token < levels ** n_digits:
        raise ValueError(f"token {token} outside [0, {levels}**{n_digits})")
    return [(token // levels ** g) % levels for g in range(n_digits)]


def compose_tokens(digits, levels):
    """Vectorised :func:`compose_token` over ``digits[N, G]`` (int64, requires ``L**G < 2**63``)."""
    digits = np.asarray(digits, dtype=np.int64)
    weights = levels ** np.arange(digits.shape[-1], dtype=np.int64)
    return (digits * weights).sum(axis=-1)


def decompose_tokens(tokens, levels, n_digits):
    tokens = np.asarray(tokens, dtype=np.int64)
    weights = levels ** np.arange(n_digits, dtype=np.int64)
    return (tokens[..., None] // weights) % levels


# -- vector quantization --------------------------------------------------------------------
def vq_quantize(z, codebook, depth=1):
    """Nearest-code quantization (ties to the lowest index), optionally residual.

    With ``depth > 1``, ``codebook`` is ``[depth, K, d]`` and each stage
    quantizes what the previous stages left over. Returns
    ``(z_hat, indices)`` where indices has a trailing ``depth`` axis.
    """
    codebook = np.asarray(codebook, dtype=np.float64)
    if codebook.size == 0:
        raise ValueError("empty codebook")
    books = codebook[None] if codebook.ndim == 2 else codebook
    if len(books) < depth:
        raise ValueError(f"residual depth {depth} exceeds {len(books)} codebooks")
    z = np.asarray(z, dtype=np.float64)
    residual = z.copy()
    z_hat = np.zeros_like(z)
    stages = []
    for book in books[:depth]:
        flat = residual.reshape(-1, book.shape[1])
        d2 = ((flat[:, None, :] - book[None, :, :]) ** 2).sum(axis=-1)
        idx = d2.argmin(axis=1)
        q = book[idx].reshape(residual.shape)
        z_hat += q
        residual = residual - q
        stages.append(idx.reshape(z.shape[:-1]))
    return z_hat, np.stack(stages, axis=-1)


@dataclass
class VectorQuantizer:
    """Residual VQ trained by exponential moving averages with dead-code reseeding."""

    codebooks: np.ndarray  # [depth, K, d]
    decay: float = 0.99
    dead_threshold: float = 1e-3
    cluster_size: np.ndarray = field(default=None)
    embed_sum: np.ndarray = field(default=None)

    def __post_init__(self):
        self.codebooks = np.asarray(self.codebooks, dtype=np.float64)
        if self.codebooks.ndim == 2:
            self.codebooks = self.codebooks[None]
        if self.cluster_size is None:
            self.cluster_size = np.ones(self.codebooks.shape[:2])
        if self.embed_sum is None:
            self.embed_sum = self.codebooks.copy()

    @classmethod
    def init(cls, size, dim, rng, depth=1, scale=1.0):
        return cls(rng.standard_normal((depth, size, dim)) * scale)

    @property
    def depth(self):
        return self.codebooks.shape[0]

    def quantize(self, z):
        return vq_quantize(z, self.codebooks, self.depth)

    def quantize_ste(self, z):
        z_hat, idx = self.quantize(z.data)
        return nd.straight_through(z, z_hat), idx

    def decode(self, indices):
        idx = np.asarray(indices)
        return sum(self.codebooks[r][idx[..., r]] for r in range(self.depth))

    def ema_update(self, z, rng):
        """One EMA step on a batch ``z[N, d]``."""
        residual = np.asarray(z, dtype=np.float64).reshape(-1, self.codebooks.shape[2])
        for r in range(self.depth):
            book = self.codebooks[r]
            _, idx = vq_quantize(residual, book)
            idx = idx[:, 0]
            onehot = np.zeros((len(residual), len(book)))
            onehot[np.arange(len(residual)), idx] = 1.0
            self.cluster_size[r] = self.decay * self.cluster_size[r] + (1 - self.decay) * onehot.sum(0)
            self.embed_sum[r] = self.decay * self.embed_sum[r] + (1 - self.decay) * onehot.T @ residual
            n = self.cluster_size[r].sum()
            smoothed = (self.cluster_size[r] + 1e-5) / (n + len(book) * 1e-5) * n
            self.codebooks[r] = self.embed_sum[r] / smoothed[:, None]
            dead = self.cluster_size[r] < self.dead_threshold
            if dead.any():
                picks = rng.choice(len(residual), size=int(dead.sum()), replace=len(residual) < dead.sum())
                self.codebooks[r][dead] = residual[picks]
                self.embed_sum[r][dead] = residual[picks]
                self.cluster_size[r][dead] = 1.0
            residual = residual - self.codebooks[r][idx]


# -- rate-distortion ------------------------------------------------------------------------
@dataclass(frozen=True)
class RateDistortion:
    rates: np.ndarray
    distortions: np.ndarray
    slope: float  # fitted d(log2 D) / dR


def uniform_scalar_quantizer(low, high, rate):
    """Midpoint quantizer with ``2**rate`` equal cells on ``[low, high]``."""
    n = 2 ** int(rate)
    step = (high - low) / n

    def q(x):
        cell = np.clip(np.floor((x - low) / step), 0, n - 1)
        return low + (cell + 0.5) * step

    return q


def codebook_quantizer(codebook):
    codebook = np.sort(np.asarray(codebook, dtype=np.float64))
    mids = (codebook[1:] + codebook[:-1]) / 2.0

    def q(x):
        return codebook[np.searchsorted(mids, x)]

    return q


def rate_distortion_probe(sampler, quantizer_for_rate, rates, n_samples=100_000, rng=None):
    """Empirical mean-squared distortion per rate and the fitted log2-distortion slope.

    ``sampler(rng, n)`` yields ``n`` samples (``[n]`` or ``[n, d]``);
    ``quantizer_for_rate(R)`` returns a function mapping samples to
    reconstructions. Rates with zero distortion are excluded from the fit.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    rates = np.asarray(list(rates), dtype=np.float64)
    dist = np.empty(len(rates))
    for i, r in enumerate(rates):
        x = np.asarray(sampler(rng, n_samples), dtype=np.float64)
        err = x - quantizer_for_rate(r)(x)
        dist[i] = np.mean(np.sum(err.reshape(len(x), -1) ** 2, axis=1))
    ok = dist > 0
    slope = float(np.polyfit(rates[ok], np.log2(dist[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return RateDistortion(rates, dist, slope)


def bits_for(levels):
    """``ceil(log2 k)`` with exact integer arithmetic."""
    levels = int(levels)
    if levels < 2:
        raise ValueError(f"codebook size must be >= 2, got {levels}")
    return (levels - 1).bit_length()


def fit_gsq(z, spec, steps=300, lr=0.02, seed=0):
    """Fit many-to-one projections to ``z[N, H]`` by minimizing squared reconstruction error."""
    params = GsqParams.init(spec, np.random.default_rng(seed))
    opt = nd.Adam([params.compress, params.expand], lr=lr, betas=(0.9, 0.99))
    target = Tensor(np.asarray(z, dtype=np.float64))
    for _ in range(steps):
        opt.zero_grad()
        z_hat, _ = gsq_many_to_one_ste(target, spec, params)
        loss = nd.mse_loss(z_hat, target)
        nd.check_finite(loss, "gsq fit loss")
        loss.backward()
        opt.step()
    return params
