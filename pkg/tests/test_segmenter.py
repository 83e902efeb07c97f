import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distok.detector import BoundarySet
from distok.ndgrad import Tensor
from distok.ndgrad.gradcheck import max_relative_error
from distok.segmenter import (
    SegmentLayout,
    dfd_expand,
    dfe_compress,
    identity_autoencoder,
    init_autoencoder,
    partition,
    reassemble,
)


def test_partition_examples():
    x = np.arange(10.0)[None]
    _, layout = partition(x, [3, 7])
    assert layout.records == ((0, 3), (3, 7), (7, 10))
    _, layout = partition(x, [])
    assert layout.records == ((0, 10),)
    segs, layout = partition(x, range(1, 10))
    assert layout.lengths == [1] * 10 and len(segs) == 10


def test_partition_accepts_boundary_set():
    _, layout = partition(np.zeros((2, 8)), BoundarySet((2, 5), 8))
    assert layout.lengths == [2, 3, 3]


@pytest.mark.parametrize("bad", [[11], [-1], [4, 4], [6, 3]])
def test_partition_rejects_invalid(bad):
    with pytest.raises(ValueError):
        partition(np.zeros((1, 10)), bad)


def test_edge_boundaries_dropped_with_warning():
    with pytest.warns(UserWarning, match="edges"):
        _, layout = partition(np.zeros((1, 6)), [0, 3, 6])
    assert layout.records == ((0, 3), (3, 6))


def test_layout_invariants():
    with pytest.raises(ValueError):
        SegmentLayout(((0, 2), (3, 5)), 5)
    with pytest.raises(ValueError):
        SegmentLayout(((0, 2), (2, 2), (2, 5)), 5)
    with pytest.raises(ValueError):
        SegmentLayout(((0, 4),), 5)
    assert SegmentLayout.from_lengths([2, 1, 4]).records == ((0, 2), (2, 3), (3, 7))


def test_reassemble_example():
    layout = SegmentLayout(((0, 2), (2, 3)), 3)
    out = reassemble([np.array([[1.0, 1.0]]), np.array([[9.0]])], layout)
    assert out.tolist() == [[1.0, 1.0, 9.0]]


def test_reassemble_length_mismatch():
    layout = SegmentLayout(((0, 2), (2, 3)), 3)
    with pytest.raises(ValueError, match="segment 1"):
        reassemble([np.zeros((1, 2)), np.zeros((1, 2))], layout)
    with pytest.raises(ValueError):
        reassemble([np.zeros((1, 3))], layout)


@given(st.integers(1, 64), st.data())
def test_tiling_frame_membership(t, data):
    cuts = sorted(data.draw(st.sets(st.integers(1, max(1, t - 1)), max_size=t)) - {t})
    x = np.random.default_rng(t).standard_normal((3, t))
    segs, layout = partition(x, cuts)
    owner = np.empty(t, dtype=int)
    for i, (s, e) in enumerate(layout.records):
        owner[s:e] = i
    for frame in range(t):
        i = owner[frame]
        s, _ = layout.records[i]
        assert np.array_equal(segs[i][:, frame - s], x[:, frame])
    assert len(segs) == len(cuts) + 1
    assert np.array_equal(reassemble(segs, layout), x)


def test_partition_of_tensor_keeps_graph():
    x = Tensor(np.random.default_rng(0).standard_normal((2, 6)), True)
    segs, layout = partition(x, [2])
    (reassemble(segs, layout) * 2.0).sum().backward()
    assert np.array_equal(x.grad, np.full((2, 6), 2.0))


@pytest.mark.parametrize("length", [1, 2, 5, 37])
def test_dfe_output_has_one_frame(length):
    params = init_autoencoder(4, 6, np.random.default_rng(0))
    assert dfe_compress(np.ones((4, length)), params).shape == (6, 1)


def test_dfe_identity_pools():
    out = dfe_compress(np.array([[1.0, 3.0], [2.0, 4.0]]), identity_autoencoder(2))
    assert out.data.tolist() == [[2.0], [3.0]]


def test_dfd_identity_replicates():
    token = np.array([[0.5], [2.0]])
    params = identity_autoencoder(2)
    assert np.array_equal(dfd_expand(token, 1, params).data, token)
    out = dfd_expand(token, 4, params).data
    assert np.array_equal(out, np.repeat(token, 4, axis=1))


def test_dfd_shape_sweep():
    params = init_autoencoder(3, 5, np.random.default_rng(1))
    token = np.random.default_rng(2).standard_normal((5, 1))
    for length in range(1, 33):
        assert dfd_expand(token, length, params).shape == (3, length)
    with pytest.raises(ValueError):
        dfd_expand(token, 0, params)


def test_identity_roundtrip_on_constant_segments():
    x = np.repeat(np.array([[1.0, 4.0, 2.0], [0.5, 0.1, 3.0]]), [3, 1, 4], axis=1)
    segs, layout = partition(x, [3, 4])
    params = identity_autoencoder(2)
    rec = [dfd_expand(dfe_compress(s, params), n, params) for s, n in zip(segs, layout.lengths)]
    assert np.allclose(reassemble(rec, layout).data, x)


def test_dfe_dfd_gradcheck(rng):
    params = init_autoencoder(3, 4, rng)
    seg = Tensor(rng.standard_normal((3, 5)), True)
    target = rng.standard_normal((3, 5))

    def loss():
        out = dfd_expand(dfe_compress(seg, params), 5, params)
        return ((out - target) ** 2).sum()

    assert max_relative_error(loss, [seg, *params.values()]) < 1e-4


def test_dfe_channel_permutation_equivariance(rng):
    params = init_autoencoder(4, 6, rng)
    perm_in, perm_hidden = rng.permutation(4), rng.permutation(6)
    permuted = {k: Tensor(v.data.copy(), True) for k, v in params.items()}
    permuted["seg.enc_conv1.weight"].data[:] = params["seg.enc_conv1.weight"].data[perm_hidden][:, perm_in]
    permuted["seg.enc_conv1.bias"].data[:] = params["seg.enc_conv1.bias"].data[perm_hidden]
    permuted["seg.enc_conv2.weight"].data[:] = params["seg.enc_conv2.weight"].data[perm_hidden][:, perm_hidden]
    permuted["seg.enc_conv2.bias"].data[:] = params["seg.enc_conv2.bias"].data[perm_hidden]
    x = rng.standard_normal((4, 7))
    a = dfe_compress(x, params).data
    b = dfe_compress(x[perm_in], permuted).data
    np.testing.assert_allclose(b, a[perm_hidden], atol=1e-12)
