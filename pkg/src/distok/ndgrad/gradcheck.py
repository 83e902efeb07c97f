"""Central finite-difference gradient checks."""

import numpy as np


def numeric_grad(fn, tensor, h=1e-4):
    """Central differences of scalar ``fn()`` w.r.t. every element of ``tensor.data``."""
    data = tensor.data
    out = np.zeros(data.shape)
    for i in np.ndindex(data.shape):
        orig = data[i]
        data[i] = orig + h
        up = fn().item()
        data[i] = orig - h
        down = fn().item()
        data[i] = orig
        out[i] = (up - down) / (2 * h)
    return out


def max_relative_error(fn, tensors, h=1e-4, floor=1e-6):
    """Largest ``|analytic - numeric| / max(|analytic|, |numeric|, floor)`` over ``tensors``."""
    for t in tensors:
        t.grad = None
    fn().backward()
    worst = 0.0
    for t in tensors:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        numeric = numeric_grad(fn, t, h)
        scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
    return worst
