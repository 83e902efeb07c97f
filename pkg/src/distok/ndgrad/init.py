"""Parameter initialisers."""

import numpy as np


def near_orthogonal(shape, rng, gain=1.0):
    """Scaled Gaussian matrix passed once through Gram-Schmidt (via QR).

    The weight is flattened to ``[shape[0], prod(shape[1:])]``; whichever side
    is smaller gets orthonormal vectors, then everything is scaled by ``gain``.
    """
    rows = shape[0]
    cols = int(np.prod(shape[1:])) if len(shape) > 1 else 1
    a = rng.standard_normal((rows, cols)) / np.sqrt(cols)
    if rows <= cols:
        q, r = np.linalg.qr(a.T)
        q = (q * np.sign(np.diag(r))).T
    else:
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
    return np.ascontiguousarray(gain * q).reshape(shape)
