"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op records its parents and a closure mapping the output gradient to
one gradient per parent. ``Tensor.backward`` walks the graph in reverse
topological order and accumulates into leaves that have ``requires_grad``.

Broadcasting is deliberately narrow: two tensors combine elementwise only
when their shapes match or one of them holds a single element. Constant
numpy arrays may broadcast into a tensor's shape.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LEAKY_SLOPE = 0.2
NORM_EPS = 1e-8


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, parents=(), backward=None, op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.op = op

    # -- introspection -----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self.op or 'leaf'})"

    def __len__(self):
        return len(self.data)

    # -- autodiff engine -----------------------------------------------------
    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operators -------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(_as_tensor(other), self)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return tabs(self)


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op):
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward, op)
    return Tensor(data, op=op)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad.reshape(shape)


def _check_elementwise(a, b, op):
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    # constants (no grad) may broadcast into the other operand's shape
    for x, y in ((a, b), (b, a)):
        if not y.requires_grad and y._backward is None:
            try:
                if np.broadcast_shapes(x.shape, y.shape) == x.shape:
                    return
            except ValueError:
                pass
    raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- elementwise binary ------------------------------------------------------
def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "div")
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)), "div")


# -- elementwise unary -------------------------------------------------------
def power(x, exponent):
    exponent = float(exponent)
    return _make(x.data ** exponent, (x,),
                 lambda g: (g * exponent * x.data ** (exponent - 1.0),), "pow")


def exp(x):
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x):
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sqrt(x):
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(x):
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def tabs(x):
    return _make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def leaky_relu(x, slope=LEAKY_SLOPE):
    pos = x.data > 0
    return _make(np.where(pos, x.data, slope * x.data), (x,),
                 lambda g: (np.where(pos, g, slope * g),), "leaky_relu")


def straight_through(x, value):
    """Forward ``value``, backward the identity onto ``x``."""
    value = np.asarray(value, dtype=np.float64)
    if value.shape != x.shape:
        raise ValueError(f"straight_through: shape mismatch {x.shape} vs {value.shape}")
    return _make(value, (x,), lambda g: (g,), "straight_through")


def round_ste(x):
    return straight_through(x, np.round(x.data))


# -- reductions and shape ------------------------------------------------------
def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x, axis=None, keepdims=False):
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), backward, "sum")


def mean(x, axis=None, keepdims=False):
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return tsum(x, axis, keepdims) * (1.0 / count)


def reshape(x, shape):
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None):
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),), "transpose")


def _is_basic_index(key):
    key = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, np.integer, slice)) or k is None or k is Ellipsis for k in key)


def getitem(x, key):
    basic = _is_basic_index(key)

    def backward(g):
        gx = np.zeros_like(x.data)
        if basic:
            gx[key] += g
        else:
            np.add.at(gx, key, g)
        return (gx,)

    return _make(x.data[key], (x,), backward, "getitem")


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def take(x, indices, axis=0):
    """Gather along ``axis`` with integer ``indices`` (any shape); scatter-adds on backward."""
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim
    moved = np.moveaxis(x.data, axis, 0)
    gathered = moved[indices]
    k = indices.ndim
    out = np.moveaxis(gathered, list(range(k)), list(range(axis, axis + k)))

    def backward(g):
        gm = np.moveaxis(g, list(range(axis, axis + k)), list(range(k)))
        gm = gm.reshape((indices.size,) + moved.shape[1:])
        acc = np.zeros_like(moved)
        np.add.at(acc, indices.reshape(-1), gm)
        return (np.moveaxis(acc, 0, axis),)

    return _make(out, (x,), backward, "take")


# -- linear algebra --------------------------------------------------------------
def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects operands of rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dimensions differ {a.shape} @ {b.shape}")

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def rfft_power(x):
    """Power spectrum ``|rfft(x)|**2`` over the last axis (length ``N`` to ``N//2 + 1``)."""
    n = x.shape[-1]
    spec = np.fft.rfft(x.data, axis=-1)

    def backward(g):
        # adjoint of the one-sided DFT: zero the negative frequencies, then inverse-transform
        full = np.zeros(x.shape, dtype=np.complex128)
        full[..., : spec.shape[-1]] = g * spec
        return (2.0 * n * np.fft.ifft(full, axis=-1).real,)

    return _make(spec.real ** 2 + spec.imag ** 2, (x,), backward, "rfft_power")


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` on the last axis; weight is ``[out, in]``."""
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"linear: input dim {x.shape[-1]} != weight in-dim {weight.shape[1]}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(lead + (weight.shape[0],))

    def backward(g):
        g2 = g.reshape(-1, weight.shape[0])
        gx = (g2 @ weight.data).reshape(x.shape)
        gw = g2.T @ x2
        grads = (gx, gw)
        return grads + ((g2.sum(axis=0),) if bias is not None else ())

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return _make(out, parents, backward, "linear")


# -- convolution -----------------------------------------------------------------
def _pad_pair(padding):
    if isinstance(padding, (int, np.integer)):
        return int(padding), int(padding)
    left, right = padding
    return int(left), int(right)


def conv1d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation of ``x[B, C_in, T]`` with ``weight[C_out, C_in, K]``.

    ``padding`` zero-pads the time axis (int or ``(left, right)``); the output
    has ``floor((T + pad - K) / stride) + 1`` frames.
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise ValueError("conv1d expects x[B, C_in, T] and weight[C_out, C_in, K]")
    B, cin, T = x.shape
    cout, wcin, K = weight.shape
    if wcin != cin:
        raise ValueError(f"conv1d: input has {cin} channels, weight expects {wcin}")
    if stride < 1:
        raise ValueError("conv1d: stride must be >= 1")
    pl, pr = _pad_pair(padding)
    Tp = T + pl + pr
    if Tp < K:
        raise ValueError(f"conv1d: input length {Tp} (padded) shorter than kernel {K}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pl, pr))) if pl or pr else x.data
    tout = (Tp - K) // stride + 1
    win = sliding_window_view(xp, K, axis=2)[:, :, ::stride][:, :, :tout]
    cols = win.transpose(0, 2, 1, 3).reshape(B * tout, cin * K)
    w2 = weight.data.reshape(cout, cin * K)
    out = (cols @ w2.T).reshape(B, tout, cout).transpose(0, 2, 1)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def backward(g):
        g2 = g.transpose(0, 2, 1).reshape(B * tout, cout)
        gw = (g2.T @ cols).reshape(weight.shape)
        gcols = (g2 @ w2).reshape(B, tout, cin, K)
        gxp = np.zeros((B, cin, Tp))
        span = stride * (tout - 1) + 1
        for k in range(K):
            gxp[:, :, k:k + span:stride] += gcols[:, :, :, k].transpose(0, 2, 1)
        grads = (gxp[:, :, pl:pl + T], gw)
        return grads + ((g.sum(axis=(0, 2)),) if bias is not None else ())

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return _make(np.ascontiguousarray(out), parents, backward, "conv1d")


def conv_transpose1d(x, weight, bias=None, stride=1):
    """Transposed convolution; ``weight[C_in, C_out, K]``, output length ``(T-1)*stride + K``."""
    B, cin, T = x.shape
    wcin, cout, K = weight.shape
    if wcin != cin:
        raise ValueError(f"conv_transpose1d: input has {cin} channels, weight expects {wcin}")
    L = (T - 1) * stride + K
    x2 = x.data.transpose(0, 2, 1).reshape(B * T, cin)
    w2 = weight.data.reshape(cin, cout * K)
    cols = (x2 @ w2).reshape(B, T, cout, K)
    out = np.zeros((B, cout, L))
    span = stride * (T - 1) + 1
    for k in range(K):
        out[:, :, k:k + span:stride] += cols[:, :, :, k].transpose(0, 2, 1)
    if bias is not None:
        out += bias.data[None, :, None]

    def backward(g):
        gcols = np.empty((B, T, cout, K))
        for k in range(K):
            gcols[:, :, :, k] = g[:, :, k:k + span:stride].transpose(0, 2, 1)
        gc2 = gcols.reshape(B * T, cout * K)
        gx = (gc2 @ w2.T).reshape(B, T, cin).transpose(0, 2, 1)
        gw = (x2.T @ gc2).reshape(weight.shape)
        grads = (gx, gw)
        return grads + ((g.sum(axis=(0, 2)),) if bias is not None else ())

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return _make(out, parents, backward, "conv_transpose1d")


# -- normalisation, pooling, resampling ----------------------------------------------
def channel_norm(x, gain, shift, eps=1e-5):
    """Normalise ``x[B, C, T]`` across channels at every frame, then apply per-channel affine."""
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    xhat = xc * inv
    out = gain.data[None, :, None] * xhat + shift.data[None, :, None]

    def backward(g):
        gxhat = g * gain.data[None, :, None]
        gx = inv * (gxhat - gxhat.mean(axis=1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=1, keepdims=True))
        return gx, (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2))

    return _make(out, (x, gain, shift), backward, "channel_norm")


def adaptive_avg_pool_to_1(x):
    """Mean over the last (time) axis, keeping it as length 1."""
    return mean(x, axis=-1, keepdims=True)


def nearest_upsample(x, length):
    """Nearest-neighbour resize of the last axis to ``length`` frames."""
    n = x.shape[-1]
    if length < 1:
        raise ValueError("nearest_upsample: target length must be >= 1")
    idx = (np.arange(length) * n) // length
    return take(x, idx, axis=-1)


# -- similarity and losses --------------------------------------------------------
def l2_normalize(x, axis=-1, eps=NORM_EPS):
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    s = norm + eps
    out = x.data / s

    def backward(g):
        dot = (g * x.data).sum(axis=axis, keepdims=True)
        safe = np.where(norm > 0, norm, 1.0)
        return (g / s - x.data * dot / (s * s * safe),)

    return _make(out, (x,), backward, "l2_normalize")


def cosine_similarity(a, b, axis=-1):
    """Cosine along ``axis`` with ``1e-8`` added to each norm."""
    return tsum(l2_normalize(a, axis) * l2_normalize(b, axis), axis=axis)


def logsumexp(x, axis=-1):
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (m + np.log(s)).squeeze(axis)
    soft = e / s
    return _make(out, (x,), lambda g: (np.expand_dims(g, axis) * soft,), "logsumexp")


def softmax_cross_entropy(logits, targets):
    """Mean over rows of ``-log softmax(logits)[target]``; logits ``[N, C]``."""
    targets = np.asarray(targets, dtype=np.int64)
    n = logits.shape[0]
    m = logits.data.max(axis=1, keepdims=True)
    e = np.exp(logits.data - m)
    s = e.sum(axis=1, keepdims=True)
    logp = logits.data - m - np.log(s)
    loss = -logp[np.arange(n), targets].mean()

    def backward(g):
        grad = e / s
        grad[np.arange(n), targets] -= 1.0
        return (grad * (g / n),)

    return _make(loss, (logits,), backward, "softmax_cross_entropy")


def l1_loss(a, b):
    return mean(tabs(a - b))


def mse_loss(a, b):
    d = a - b
    return mean(d * d)


def check_finite(x, what="tensor"):
    """Raise ``FloatingPointError`` when ``x`` holds NaN or infinity."""
    if not np.all(np.isfinite(x.data)):
        raise FloatingPointError(f"non-finite values in {what} (op={x.op or 'leaf'})")
    return x
