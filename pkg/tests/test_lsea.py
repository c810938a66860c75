import numpy as np
import pytest

from duse import tensor as T
from duse.errors import ConfigurationError
from duse.lsea import (
    LseaParams, aggregate, attention_pool, fuse, semantic_attention_head, temporal_self_attention,
)
from duse.tensor import Tensor, finite_difference_check


@pytest.fixture
def params():
    return LseaParams(dim=6, num_heads=3, beta=0.7, seed=11)


def test_temporal_single_frame(params, rng):
    row = rng.normal(size=(1, 6))
    out, w = temporal_self_attention(Tensor(row), params, return_weights=True)
    assert w.data.tolist() == [[1.0]]
    expected = (row @ params.wv.data) @ params.lin_w.data + params.lin_b.data
    np.testing.assert_allclose(out.data, expected, atol=1e-14)


def test_temporal_identical_frames(params, rng):
    out = temporal_self_attention(Tensor(np.tile(rng.normal(size=6), (5, 1))), params).data
    np.testing.assert_allclose(out, np.tile(out[0], (5, 1)), atol=1e-14)


def test_temporal_rows_sum_to_one(params, rng):
    _, w = temporal_self_attention(Tensor(rng.normal(size=(7, 6))), params, return_weights=True)
    assert np.abs(w.data.sum(axis=-1) - 1).max() <= 1e-12


def test_pool_zero_scorer_is_mean(rng):
    frames = rng.normal(size=(5, 4))
    pooled, w = attention_pool(Tensor(frames), Tensor(np.zeros((4, 1))))
    np.testing.assert_allclose(w.data, [0.2] * 5, atol=1e-15)
    np.testing.assert_allclose(pooled.data, frames.mean(axis=0), atol=1e-15)


def test_pool_single_frame(rng):
    row = rng.normal(size=(1, 4))
    pooled, w = attention_pool(Tensor(row), Tensor(rng.normal(size=(4, 1))))
    assert w.data.tolist() == [1.0]
    np.testing.assert_array_equal(pooled.data, row[0])


def test_pool_saturation(rng):
    frames = rng.normal(size=(4, 3)) * 0.1
    frames[2, 0] = 20.0 + frames[:, 0].max()
    pooled, _ = attention_pool(Tensor(frames), Tensor(np.array([[1.0], [0.0], [0.0]])))
    assert np.abs(pooled.data - frames[2]).max() < 1e-6


def test_semantic_single_class(rng):
    row = rng.normal(size=(1, 5))
    out, alpha = semantic_attention_head(Tensor(rng.normal(size=5)), Tensor(row))
    assert alpha.data.tolist() == [1.0]
    np.testing.assert_array_equal(out.data, row[0])


def test_semantic_orthogonal_is_uniform(rng):
    text = np.zeros((3, 4))
    text[:, 1:] = rng.normal(size=(3, 3))
    out, alpha = semantic_attention_head(Tensor([2.0, 0.0, 0.0, 0.0]), Tensor(text))
    np.testing.assert_allclose(alpha.data, [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(out.data, text.mean(axis=0), atol=1e-15)


def test_semantic_parallel_row_wins(rng):
    q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    text = q[:4] + 0.01 * rng.normal(size=(4, 8))
    _, alpha = semantic_attention_head(Tensor(3.0 * text[2]), Tensor(text))
    cos = [text[2] @ r / np.linalg.norm(text[2]) / np.linalg.norm(r) for r in text]
    assert int(np.argmax(alpha.data)) == 2 == int(np.argmax(cos))


def test_semantic_cosine_invariance(rng):
    v, text = rng.normal(size=5), rng.normal(size=(4, 5))
    _, a = semantic_attention_head(Tensor(v), Tensor(text))
    _, b = semantic_attention_head(Tensor(7.5 * v), Tensor(text))
    np.testing.assert_allclose(a.data, b.data, atol=1e-14)


def test_fuse_endpoints(params, rng):
    pooled, text = Tensor(rng.normal(size=6)), Tensor(rng.normal(size=(4, 6)))
    _, parts = fuse(pooled, text, params, return_parts=True)
    np.testing.assert_allclose(fuse(pooled, text, params, beta=1.0).data,
                               parts["visual"].data.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(fuse(pooled, text, params, beta=0.0).data,
                               parts["semantic"].data.mean(axis=0), atol=1e-12)


def test_fuse_rejects_bad_beta(params, rng):
    with pytest.raises(ConfigurationError):
        fuse(Tensor(np.ones(6)), Tensor(np.ones((2, 6))), params, beta=1.2)
    with pytest.raises(ConfigurationError):
        LseaParams(6, beta=-0.1)


@pytest.mark.parametrize("t,c,heads", [(1, 1, 1), (3, 2, 2), (5, 7, 3)])
def test_aggregate_shapes(t, c, heads, rng):
    p = LseaParams(6, num_heads=heads, seed=t)
    fused, text_side, trace = aggregate(Tensor(rng.normal(size=(t, 6))), Tensor(rng.normal(size=(c, 6))), p)
    assert fused.shape == (p.head_dim,) and text_side.shape == (c, p.head_dim)
    assert trace.pool_weights.shape == (t,) and trace.alpha.shape == (heads, c)


def test_aggregate_batched_matches_single(params, rng):
    frames, text = rng.normal(size=(3, 4, 6)), Tensor(rng.normal(size=(5, 6)))
    batched, _, _ = aggregate(Tensor(frames), text, params)
    for i in range(3):
        single, _, _ = aggregate(Tensor(frames[i]), text, params)
        np.testing.assert_allclose(batched.data[i], single.data, atol=1e-13)


def test_aggregate_gradients(params, rng):
    frames = Tensor(rng.normal(size=(2, 4, 6)), requires_grad=True)
    text = Tensor(rng.normal(size=(3, 6)), requires_grad=True)
    for p in params.named_parameters().values():
        p.data[...] = rng.normal(size=p.shape)

    def f():
        fused, text_side, _ = aggregate(frames, text, params)
        return -T.log_softmax(fused @ text_side.T, axis=-1)[np.arange(2), [0, 2]].mean()

    assert finite_difference_check(f, [frames, text, *params.named_parameters().values()]) < 1e-4
