import numpy as np
import pytest

from duse import tensor as T
from duse.errors import ConfigurationError
from duse.htpc import (
    PromptCluster, PromptMapper, build_text_schedule, build_visual_schedule, check_strategy_for_profile,
    map_text_prompts_to_visual, resolve_prompt_depth, temporal_position_encoding,
)
from duse.tensor import Tensor, finite_difference_check


@pytest.mark.parametrize("strategy,k,m", [
    ("Shallow", 12, 1), ("Normal", 12, 4), ("Deep", 12, 8), ("Normal", 24, 8), ("Deep", 24, 16),
    ("Shallow", 1, 1), ("Normal", 1, 1), ("Deep", 1, 1), ("Normal", 2, 1), ("Deep", 2, 2),
    ("Normal", 6, 2), ("Deep", 6, 4),
])
def test_depth_table(strategy, k, m):
    assert resolve_prompt_depth(strategy, k) == m


def test_depth_errors():
    with pytest.raises(ConfigurationError):
        resolve_prompt_depth("Normal", 0)
    with pytest.raises(ConfigurationError):
        resolve_prompt_depth("Medium", 12)


def test_deep_rejected_for_large_profile():
    with pytest.raises(ConfigurationError, match="ViT-L"):
        check_strategy_for_profile("Deep", "large")
    check_strategy_for_profile("Deep", "large", force=True)
    check_strategy_for_profile("Normal", "large")


def identity_mapper(dim):
    m = PromptMapper(dim, dim)
    m.w1.data[...] = np.eye(dim)
    m.w2.data[...] = np.eye(dim)
    return m


def test_identity_mapper_on_nonnegative_tokens(rng):
    cluster = PromptCluster(2, 3, 4)
    cluster.text_prompts.data[...] = np.abs(rng.normal(size=(2, 3, 4)))
    out = map_text_prompts_to_visual(cluster, identity_mapper(4))
    np.testing.assert_array_equal(out.data, cluster.text_prompts.data)


def test_identity_mapper_zeroes_negatives(rng):
    x = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(identity_mapper(4)(Tensor(x)).data, np.maximum(x, 0))


def test_mapper_shapes():
    cluster = PromptCluster(3, 2, 6)
    assert map_text_prompts_to_visual(cluster, PromptMapper(6, 10)).shape == (3, 2, 10)


def test_position_encoding_values():
    np.testing.assert_array_equal(temporal_position_encoding(1, 6), [[0, 1, 0, 1, 0, 1]])
    pe = temporal_position_encoding(3, 4)
    np.testing.assert_allclose(pe[2], [np.sin(2), np.cos(2), np.sin(2e-2), np.cos(2e-2)], atol=1e-15)
    with pytest.raises(ConfigurationError):
        temporal_position_encoding(3, 5)


def test_text_schedule_lengths():
    assert len(build_text_schedule(PromptCluster(1, 2, 4))) == 1
    sched = build_text_schedule(PromptCluster(5, 2, 4))
    assert len(sched) == 5 and sched[4].shape == (2, 4)


def test_visual_schedule_single_frame():
    cluster, mapper = PromptCluster(2, 3, 4, seed=5), PromptMapper(4, 6, seed=6)
    mapped = map_text_prompts_to_visual(cluster, mapper).data
    first, second = build_visual_schedule(cluster, mapper, 1)
    assert first.shape == (1, 3, 6)
    np.testing.assert_array_equal(first.data[0], mapped[0] + temporal_position_encoding(1, 6)[0])
    np.testing.assert_array_equal(second.data, mapped[1])


def test_visual_schedule_pe_per_frame():
    cluster, mapper = PromptCluster(1, 2, 4), PromptMapper(4, 4)
    (first,) = build_visual_schedule(cluster, mapper, 3)
    (plain,) = build_visual_schedule(cluster, mapper, 3, use_pe=False)
    diff = first.data - plain.data
    np.testing.assert_allclose(diff, np.repeat(temporal_position_encoding(3, 4)[:, None], 2, axis=1),
                               atol=1e-15)
    assert np.array_equal(plain.data[0], plain.data[2])


def test_schedule_gradients(rng):
    cluster, mapper = PromptCluster(2, 2, 4, seed=1), PromptMapper(4, 6, seed=2)
    probe = [Tensor(rng.normal(size=(3, 2, 6))), Tensor(rng.normal(size=(2, 6)))]

    def f():
        sched = build_visual_schedule(cluster, mapper, 3)
        return (sched[0] * probe[0]).sum() + (T.quick_gelu(sched[1]) * probe[1]).sum()

    params = [cluster.text_prompts, *mapper.named_parameters().values()]
    assert finite_difference_check(f, params) < 1e-4
