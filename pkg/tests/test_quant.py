import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distok import ndgrad as nd
from distok.corpus import cluster_latents
from distok.ndgrad import Tensor
from distok.ndgrad.gradcheck import max_relative_error
from distok.quant import (
    GsqParams,
    QuantizerSpec,
    VectorQuantizer,
    bits_for,
    codebook_quantizer,
    compose_token,
    compose_tokens,
    decompose_token,
    decompose_tokens,
    fit_gsq,
    fsq_grid,
    fsq_quantize,
    fsq_ste,
    gsq_many_to_many,
    gsq_many_to_one,
    gsq_many_to_one_decode,
    gsq_many_to_one_ste,
    rate_distortion_probe,
    uniform_scalar_quantizer,
    vq_quantize,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuantizerSpec("fsq", levels=1, groups=1, input_dim=4)
    with pytest.raises(ValueError):
        QuantizerSpec("gsq_m2o", levels=8, groups=3, input_dim=8)
    with pytest.raises(ValueError):
        QuantizerSpec("lfq")
    with pytest.raises(ValueError):
        QuantizerSpec("vq", codebook_size=0)
    spec = QuantizerSpec("gsq_m2o", 16, 4, 24)
    assert spec.group_dim == 6 and spec.vocab_size == 16 ** 4 and spec.bits_per_token == 16


def test_fsq_saturates():
    value, idx = fsq_quantize(1e9, 8)
    assert idx == 7 and value == 1.0
    value, idx = fsq_quantize(-1e9, 8)
    assert idx == 0 and value == -1.0


def test_fsq_zero_tie_rounds_up():
    value, idx = fsq_quantize(0.0, 8)
    assert idx == 4 and value == pytest.approx(1 / 7)


@pytest.mark.parametrize("levels", range(2, 17))
def test_fsq_idempotent_on_grid(levels):
    grid = fsq_grid(levels)
    interior = grid[1:-1]  # atanh(+-1) is infinite; saturation is covered separately
    value, idx = fsq_quantize(np.arctanh(interior), levels)
    np.testing.assert_allclose(value, interior, atol=1e-12)
    assert idx.tolist() == list(range(1, levels - 1))


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=40), st.integers(2, 16))
def test_fsq_monotone_and_bounded(xs, levels):
    xs = np.sort(np.asarray(xs))
    value, idx = fsq_quantize(xs, levels)
    assert np.all(np.diff(value) >= 0) and np.all(np.diff(idx) >= 0)
    assert np.all(np.abs(value - np.tanh(xs)) <= 1 / (levels - 1) + 1e-12)


def test_fsq_ste_gradient_is_tanh_derivative(rng):
    x = Tensor(rng.standard_normal(6), True)
    q, _ = fsq_ste(x, 5)
    q.sum().backward()
    np.testing.assert_allclose(x.grad, 1 - np.tanh(x.data) ** 2)


def test_gsq_m2o_degenerate_grouping_is_fsq(rng):
    spec = QuantizerSpec("gsq_m2o", 8, 5, 5)
    z = rng.standard_normal((7, 5))
    z_hat, idx = gsq_many_to_one(z, spec, GsqParams.identity(spec))
    ref_v, ref_i = fsq_quantize(z, 8)
    assert np.array_equal(z_hat, ref_v) and np.array_equal(idx, ref_i)


def test_gsq_m2o_zero_vector():
    spec = QuantizerSpec("gsq_m2o", 8, 4, 8)
    _, idx = gsq_many_to_one(np.zeros(8), spec, GsqParams.init(spec, np.random.default_rng(0)))
    assert idx.tolist() == [4, 4, 4, 4]


def test_gsq_m2o_matches_hand_rolled(rng):
    spec = QuantizerSpec("gsq_m2o", 8, 4, 8)
    params = GsqParams.init(spec, rng)
    z = rng.standard_normal(8)
    expected = []
    for g in range(4):
        p = float(params.compress.data[g] @ z[2 * g:2 * g + 2])
        j = int(np.floor((np.tanh(p) + 1) * 7 / 2 + 0.5))
        expected.append((-1 + 2 * j / 7) * params.expand.data[g])
    z_hat, _ = gsq_many_to_one(z, spec, params)
    np.testing.assert_allclose(z_hat, np.concatenate(expected), atol=1e-12)


def test_gsq_m2o_tensor_path_agrees(rng):
    spec = QuantizerSpec("gsq_m2o", 16, 4, 24)
    params = GsqParams.init(spec, rng)
    z = rng.standard_normal((9, 24))
    ref, ref_idx = gsq_many_to_one(z, spec, params)
    out, idx = gsq_many_to_one_ste(Tensor(z), spec, params)
    np.testing.assert_allclose(out.data, ref, atol=1e-12)
    assert np.array_equal(idx, ref_idx)
    np.testing.assert_allclose(gsq_many_to_one_decode(idx, spec, params).data, ref, atol=1e-12)


def test_gsq_projection_gradcheck(rng):
    # The grid snap is piecewise constant, so finite differences run on the
    # surrogate the straight-through estimator differentiates: the same graph
    # with tanh in place of the snap. Upstream of the snap the two agree exactly.
    spec = QuantizerSpec("gsq_m2o", 8, 2, 6)
    params = GsqParams.init(spec, rng)
    z = Tensor(rng.standard_normal((3, 6)), True)
    w = rng.standard_normal((3, 6))
    out, _ = gsq_many_to_one_ste(z, spec, params)
    (out * w).sum().backward()
    ste_z, ste_w = z.grad.copy(), params.compress.grad.copy()

    def relaxed():
        zg = nd.transpose(z.reshape(3, 2, 3), (1, 0, 2))
        p = nd.tanh(nd.matmul(zg, params.compress.reshape(2, 3, 1)))
        o = nd.matmul(p, params.expand.reshape(2, 1, 3))
        return (nd.transpose(o, (1, 0, 2)).reshape(3, 6) * w).sum()

    assert max_relative_error(relaxed, [z, params.compress, params.expand]) < 1e-4
    np.testing.assert_allclose(ste_z, z.grad, atol=1e-12)
    np.testing.assert_allclose(ste_w, params.compress.grad, atol=1e-12)


def test_gsq_m2m_single_group_is_fsq(rng):
    spec = QuantizerSpec("gsq_m2m", 6, 1, 5)
    z = rng.standard_normal(5)
    z_hat, idx = gsq_many_to_many(z, spec)
    ref_v, ref_i = fsq_quantize(z, 6)
    assert np.array_equal(z_hat, ref_v) and np.array_equal(idx[0], ref_i)


def test_gsq_m2m_split_apply(rng):
    spec = QuantizerSpec("gsq_m2m", 8, 2, 6)
    z = rng.standard_normal(6)
    z_hat, idx = gsq_many_to_many(z, spec)
    a, b = fsq_quantize(z[:3], 8), fsq_quantize(z[3:], 8)
    assert np.array_equal(z_hat, np.concatenate([a[0], b[0]]))
    assert idx.tolist() == [a[1].tolist(), b[1].tolist()]
    _, zero_idx = gsq_many_to_many(np.zeros(6), spec)
    assert (zero_idx == 4).all()


def test_gsq_dimension_mismatch():
    spec = QuantizerSpec("gsq_m2o", 8, 2, 6)
    with pytest.raises(ValueError, match="last dimension 6"):
        gsq_many_to_one(np.zeros(5), spec, GsqParams.identity(spec))
    with pytest.raises(ValueError):
        gsq_many_to_many(np.zeros(4), QuantizerSpec("gsq_m2m", 8, 2, 6))


def test_compose_examples():
    assert compose_token([0, 0, 0], 8) == 0
    assert compose_token([3, 0, 7], 8) == 451
    assert compose_token([7, 7, 7], 8) == 511
    assert decompose_token(451, 8, 3) == [3, 0, 7]
    assert decompose_token(0, 8, 3) == [0, 0, 0]
    with pytest.raises(ValueError):
        compose_token([8, 0], 8)
    with pytest.raises(ValueError):
        decompose_token(512, 8, 3)
    with pytest.raises(ValueError):
        decompose_token(-1, 8, 3)


@pytest.mark.parametrize("levels,groups", [(2, 6), (3, 4), (5, 3), (10, 5), (7, 6)])
def test_composite_bijection_exhaustive(levels, groups):
    tokens = np.arange(levels ** groups)
    digits = decompose_tokens(tokens, levels, groups)
    assert np.array_equal(compose_tokens(digits, levels), tokens)
    assert len({tuple(d) for d in digits.tolist()}) == len(tokens)


def test_scalar_and_vector_token_paths_agree():
    for digits in itertools.product(range(4), repeat=3):
        assert compose_token(digits, 4) == int(compose_tokens([digits], 4)[0])


def test_vq_examples():
    book = np.array([[0.0, 0.0], [1.0, 1.0]])
    z_hat, idx = vq_quantize([0.2, 0.2], book)
    assert idx.tolist() == [0] and z_hat.tolist() == [0.0, 0.0]
    z_hat, idx = vq_quantize([1.0, 1.0], book)
    assert idx.tolist() == [1] and z_hat.tolist() == [1.0, 1.0]
    _, idx = vq_quantize([0.5, 0.5], book)
    assert idx.tolist() == [0]
    with pytest.raises(ValueError):
        vq_quantize([0.0], np.zeros((0, 1)))


def test_vq_matches_bruteforce(rng):
    book = rng.standard_normal((32, 4))
    q = rng.standard_normal((1000, 4))
    _, idx = vq_quantize(q, book)
    brute = [min(range(32), key=lambda k: (sum((q[i] - book[k]) ** 2), k)) for i in range(1000)]
    assert idx[:, 0].tolist() == brute


def test_residual_vq_reduces_error(rng):
    books = rng.standard_normal((3, 16, 2))
    z = rng.standard_normal((200, 2))
    errs = [np.mean((vq_quantize(z, books, d)[0] - z) ** 2) for d in (1, 2, 3)]
    vq = VectorQuantizer(books.copy())
    for _ in range(50):
        vq.ema_update(z, rng)
    trained = np.mean((vq.quantize(z)[0] - z) ** 2)
    assert trained < errs[-1]
    assert np.allclose(vq.decode(vq.quantize(z)[1]), vq.quantize(z)[0])


def test_vq_ema_reseeds_dead_codes(rng):
    vq = VectorQuantizer(np.array([[[0.0, 0.0], [100.0, 100.0]]]), dead_threshold=0.5)
    for _ in range(100):
        vq.ema_update(rng.standard_normal((64, 2)) * 0.1, rng)
    assert np.abs(vq.codebooks).max() < 1.0


def test_rate_distortion_zero_variance():
    res = rate_distortion_probe(lambda r, n: np.full(n, 0.3), lambda R: uniform_scalar_quantizer(0, 1, R),
                                [2, 3, 4], n_samples=1000)
    assert np.allclose(res.distortions, (0.3 - np.array([0.375, 0.3125, 0.28125])) ** 2)
    const = rate_distortion_probe(lambda r, n: np.zeros(n), lambda R: (lambda x: x), [2, 3], n_samples=10)
    assert (const.distortions == 0).all()


def test_codebook_quantizer_nearest():
    q = codebook_quantizer([1.0, -1.0, 0.0])
    assert q(np.array([-0.9, -0.4, 0.6, 5.0])).tolist() == [-1.0, 0.0, 1.0, 1.0]


def test_bits_for():
    assert [bits_for(k) for k in (2, 3, 4, 5, 1024, 1025)] == [1, 2, 2, 3, 10, 11]
    with pytest.raises(ValueError):
        bits_for(1)


def test_fit_gsq_reduces_error():
    z, _ = cluster_latents(400, seed=3)
    spec = QuantizerSpec("gsq_m2o", 4, 4, 8)
    before = GsqParams.init(spec, np.random.default_rng(0))
    after = fit_gsq(z, spec, steps=100, seed=0)
    err = lambda p: np.mean((gsq_many_to_one(z, spec, p)[0] - z) ** 2)
    assert err(after) < err(before)
