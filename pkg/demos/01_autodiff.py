"""Reverse-mode autodiff with ndgrad: build a tiny graph, backprop, compare with finite differences."""
import numpy as np

from distok import ndgrad as nd
from distok.ndgrad import Tensor
from distok.ndgrad.gradcheck import max_relative_error

rng = np.random.default_rng(0)

# One strided conv, a leaky ReLU, and a mean-square readout.
w = Tensor(rng.standard_normal((3, 1, 5)), True)
x = Tensor(rng.standard_normal((2, 1, 40)))


def loss():
    y = nd.leaky_relu(nd.conv1d(x, w, stride=2, padding=2))
    return nd.mean(nd.mul(y, y))


value = loss()
value.backward()
print("loss", round(value.item(), 4), "grad shape", w.grad.shape)
print("worst relative gradient error", max_relative_error(loss, [w]))

# Straight-through rounding: rounded values forward, identity gradient backward.
z = Tensor(np.array([0.2, 1.7, -0.6]), True)
r = nd.round_ste(z)
nd.tsum(r).backward()
print("rounded", r.data, "gradient", z.grad)
