"""Latent semantic emotion aggregator.

Frame features ``F_V [t, d]`` go through single-head temporal self-attention
and a linear layer, are pooled over time with learned softmax scores, then
fused with class text features through multi-head cosine attention:

    V_g = mean_i( beta * Vo_i + (1 - beta) * To_i )

All functions accept extra leading batch axes on the visual side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .tensor import Tensor


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 <= beta <= 1.0:
        raise ConfigurationError(f"lsea.beta must lie in [0, 1], got {beta}")
    return beta


class LseaParams:
    def __init__(self, dim: int, num_heads: int = 4, beta: float = 0.7, head_dim: int | None = None,
                 seed: int = 0, trainable: bool = True):
        if dim < 1 or num_heads < 1:
            raise ConfigurationError(f"lsea needs dim >= 1 and heads >= 1, got {dim}, {num_heads}")
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = max(1, dim // num_heads) if head_dim is None else head_dim
        if self.head_dim < 1:
            raise ConfigurationError(f"lsea head width must be >= 1, got {self.head_dim}")
        self.beta = _check_beta(beta)
        rng = np.random.default_rng(seed)
        s = dim ** -0.5

        def param(*shape, std=s):
            return Tensor(rng.normal(0.0, std, shape), requires_grad=trainable)

        self.wq, self.wk, self.wv = param(dim, dim), param(dim, dim), param(dim, dim)
        self.lin_w = param(dim, dim)
        self.lin_b = Tensor(np.zeros(dim), requires_grad=trainable)
        self.scorer = param(dim, 1, std=0.02)
        self.head_visual_w = param(num_heads, dim, self.head_dim)
        self.head_visual_b = Tensor(np.zeros((num_heads, 1, self.head_dim)), requires_grad=trainable)
        self.head_text_w = param(num_heads, dim, self.head_dim)
        self.head_text_b = Tensor(np.zeros((num_heads, 1, self.head_dim)), requires_grad=trainable)

    def named_parameters(self) -> dict[str, Tensor]:
        names = ("wq", "wk", "wv", "lin_w", "lin_b", "scorer",
                 "head_visual_w", "head_visual_b", "head_text_w", "head_text_b")
        return {name: getattr(self, name) for name in names}


@dataclass
class FusionTrace:
    temporal: np.ndarray      # V_m  [..., t, d]
    pooled: np.ndarray        # V_o  [..., d]
    pool_weights: np.ndarray  # w    [..., t]
    semantic: np.ndarray      # To   [..., heads, d_h]
    alpha: np.ndarray         # [..., heads, c]
    fused: np.ndarray         # V_g  [..., d_h]

    def as_dict(self) -> dict:
        return {k: v.tolist() for k, v in self.__dict__.items()}


def temporal_self_attention(features: Tensor, params: LseaParams, return_weights: bool = False):
    """``Linear(Attention(F W_Q, F W_K, F W_V))`` over the frame axis."""
    if features.shape[-1] != params.dim:
        raise DimensionError(f"frame feature width {features.shape[-1]} != lsea dim {params.dim}")
    q, k, v = features @ params.wq, features @ params.wk, features @ params.wv
    weights = T.softmax((q @ k.T) * (1.0 / math.sqrt(params.dim)), axis=-1)
    out = (weights @ v) @ params.lin_w + params.lin_b
    return (out, weights) if return_weights else out


def attention_pool(frames: Tensor, scorer: Tensor):
    """Softmax-weighted sum over frames; returns ``(V_o, w)``."""
    scores = (frames @ scorer)[..., 0]
    w = T.softmax(scores, axis=-1)
    pooled = (w.reshape(*w.shape[:-1], 1, w.shape[-1]) @ frames)[..., 0, :]
    return pooled, w


def semantic_attention_head(visual: Tensor, text: Tensor):
    """Cosine-softmax attention of one visual vector over ``c`` class rows.

    ``visual`` is ``[..., d_h]`` and ``text`` is ``[..., c, d_h]``; returns
    ``(To, alpha)`` with ``To = alpha @ text`` on the unnormalized rows.
    """
    v = T.l2_normalize(visual, axis=-1)
    v = v.reshape(*v.shape[:-1], 1, v.shape[-1])
    sims = v @ T.l2_normalize(text, axis=-1).T
    alpha = T.softmax(sims, axis=-1)
    return (alpha @ text)[..., 0, :], alpha[..., 0, :]


def project_heads(pooled: Tensor, text: Tensor, params: LseaParams):
    """Per-head projections: ``[..., heads, d_h]`` visual and ``[heads, c, d_h]`` text."""
    v = pooled.reshape(*pooled.shape[:-1], 1, 1, pooled.shape[-1])
    visual = (v @ params.head_visual_w + params.head_visual_b)[..., 0, :]
    text_h = text @ params.head_text_w + params.head_text_b
    return visual, text_h


def fuse(pooled: Tensor, text: Tensor, params: LseaParams, beta: float | None = None,
         return_parts: bool = False):
    """Head-averaged ``beta``-mix of projected visual and semantic vectors."""
    beta = _check_beta(params.beta if beta is None else beta)
    visual, text_h = project_heads(pooled, text, params)
    semantic, alpha = semantic_attention_head(visual, text_h)
    fused = (visual * beta + semantic * (1.0 - beta)).mean(axis=-2)
    if return_parts:
        return fused, {"visual": visual, "text": text_h, "semantic": semantic, "alpha": alpha}
    return fused


def aggregate(frame_features: Tensor, text_features: Tensor, params: LseaParams):
    """Full aggregator: ``[..., t, d]`` frames and ``[c, d]`` texts.

    Returns ``(V_g [..., d_h], text side [c, d_h], FusionTrace)``; the text
    side is the head-mean of the projected class rows.
    """
    temporal = temporal_self_attention(frame_features, params)
    pooled, w = attention_pool(temporal, params.scorer)
    fused, parts = fuse(pooled, text_features, params, return_parts=True)
    trace = FusionTrace(
        temporal=temporal.data, pooled=pooled.data, pool_weights=w.data,
        semantic=parts["semantic"].data, alpha=parts["alpha"].data, fused=fused.data,
    )
    return fused, parts["text"].mean(axis=0), trace
