"""Hierarchical temporal prompt cluster.

Learnable text prompt streams for the first ``M`` encoder layers, a shared
MLP that maps each text prompt token to a visual prompt token, and a
frame-level sinusoidal encoding added to the first visual stream.
"""
from __future__ import annotations

import enum
import math

import numpy as np

from . import tensor as T
from .errors import ConfigurationError
from .tensor import Tensor


class DepthStrategy(str, enum.Enum):
    SHALLOW = "Shallow"
    NORMAL = "Normal"
    DEEP = "Deep"

    @classmethod
    def parse(cls, value) -> "DepthStrategy":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).strip().lower() == member.value.lower():
                return member
        raise ConfigurationError(f"unknown prompt depth strategy {value!r}; expected Shallow, Normal or Deep")


def resolve_prompt_depth(strategy, num_layers: int) -> int:
    """Number of prompted layers: 1, ceil(K/3) or ceil(2K/3)."""
    strategy = DepthStrategy.parse(strategy)
    if num_layers < 1:
        raise ConfigurationError(f"encoder must have at least one layer, got {num_layers}")
    if strategy is DepthStrategy.SHALLOW:
        depth = 1
    elif strategy is DepthStrategy.NORMAL:
        depth = -(-num_layers // 3)
    else:
        depth = -(-2 * num_layers // 3)
    return max(1, min(depth, num_layers))


def check_strategy_for_profile(strategy, profile: str, force: bool = False) -> None:
    """Deep prompting is not used with large towers unless forced."""
    if DepthStrategy.parse(strategy) is DepthStrategy.DEEP and profile == "large" and not force:
        raise ConfigurationError(
            "htpc.strategy: Deep prompting is excluded for the large encoder profile "
            "(as with ViT-L/14); pass --force-deep to override"
        )


class PromptCluster:
    """``M`` streams of ``n`` text prompt tokens of width ``d_T``."""

    def __init__(self, depth: int, n: int, text_dim: int, seed: int = 0, std: float = 0.02,
                 trainable: bool = True):
        if depth < 1 or n < 1 or text_dim < 1:
            raise ConfigurationError(f"prompt cluster needs depth, n, width >= 1; got {depth}, {n}, {text_dim}")
        self.depth, self.n, self.text_dim, self.seed = depth, n, text_dim, seed
        rng = np.random.default_rng(seed)
        self.text_prompts = Tensor(rng.normal(0.0, std, (depth, n, text_dim)), requires_grad=trainable)

    def named_parameters(self) -> dict[str, Tensor]:
        return {"text_prompts": self.text_prompts}


class PromptMapper:
    """Linear -> ReLU -> linear map from text prompt width to visual prompt width.

    One instance serves every prompt stream.
    """

    def __init__(self, text_dim: int, visual_dim: int, hidden: int | None = None, seed: int = 0,
                 trainable: bool = True):
        hidden = text_dim if hidden is None else hidden
        if hidden < 1:
            raise ConfigurationError(f"mapper hidden width must be >= 1, got {hidden}")
        rng = np.random.default_rng(seed)
        self.w1 = Tensor(rng.normal(0.0, text_dim ** -0.5, (hidden, text_dim)), requires_grad=trainable)
        self.b1 = Tensor(np.zeros(hidden), requires_grad=trainable)
        self.w2 = Tensor(rng.normal(0.0, hidden ** -0.5, (visual_dim, hidden)), requires_grad=trainable)
        self.b2 = Tensor(np.zeros(visual_dim), requires_grad=trainable)

    def named_parameters(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    @property
    def visual_dim(self) -> int:
        return self.w2.shape[0]

    def __call__(self, tokens: Tensor) -> Tensor:
        hidden = T.relu(tokens @ self.w1.T + self.b1)
        return hidden @ self.w2.T + self.b2


def map_text_prompts_to_visual(cluster: PromptCluster, mapper: PromptMapper) -> Tensor:
    """``[M, n, d_T]`` text prompts to ``[M, n, d_V]`` visual prompts."""
    return mapper(cluster.text_prompts)


def temporal_position_encoding(num_frames: int, width: int) -> np.ndarray:
    """Sinusoidal frame encoding: ``sin`` on even columns, ``cos`` on odd ones."""
    if num_frames < 1:
        raise ConfigurationError(f"frame count must be >= 1, got {num_frames}")
    if width < 2 or width % 2:
        raise ConfigurationError(f"temporal encoding width must be even, got {width}")
    frames = np.arange(num_frames, dtype=np.float64)[:, None]
    rates = np.exp(-math.log(10000.0) * np.arange(0, width, 2, dtype=np.float64) / width)
    pe = np.empty((num_frames, width))
    pe[:, 0::2] = np.sin(frames * rates)
    pe[:, 1::2] = np.cos(frames * rates)
    return pe


def build_text_schedule(cluster: PromptCluster) -> list[Tensor]:
    """Per-layer text prompts ``[n, d_T]`` for layers ``0 .. M-1``."""
    return [cluster.text_prompts[i] for i in range(cluster.depth)]


def build_visual_schedule(cluster: PromptCluster, mapper: PromptMapper, num_frames: int,
                          use_pe: bool = True) -> list[Tensor]:
    """Per-layer visual prompts.

    Layer 0 gets ``[t, n, d_V]``: the mapped stream plus, per frame, one
    encoding vector added to all ``n`` tokens. Deeper layers get the mapped
    stream ``[n, d_V]`` shared by all frames.
    """
    visual = map_text_prompts_to_visual(cluster, mapper)
    first = visual[0]
    if use_pe:
        pe = temporal_position_encoding(num_frames, mapper.visual_dim)
        first = first + Tensor(pe[:, None, :])
    else:
        first = T.broadcast_to(first, (num_frames, *first.shape))
    return [first, *(visual[i] for i in range(1, cluster.depth))]
