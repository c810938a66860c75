"""The dual-stream model: frozen towers, prompt cluster and aggregator."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .config import RunConfig
from .encoder import EncoderConfig, TextEncoder, VisionEncoder
from .errors import ContractError
from .htpc import (
    PromptCluster, PromptMapper, build_text_schedule, build_visual_schedule, resolve_prompt_depth,
)
from .lsea import LseaParams, aggregate
from .tensor import Tensor


class DuseModel:
    """Frames ``[B, t, C, H, W]`` and ``c`` class descriptions to similarity logits.

    With ``htpc.enabled`` off the prompts are fixed random values (no
    temporal encoding); with ``lsea.enabled`` off frame features are
    mean-pooled and compared with raw text features.
    """

    def __init__(self, cfg: RunConfig, descriptions: Sequence[str]):
        self.cfg = cfg
        e, h, l, t = cfg.encoder, cfg.htpc, cfg.lsea, cfg.train
        text_cfg = EncoderConfig(e.layers, e.text_dim, e.heads, e.ff_dim, e.max_seq_len, e.output_dim)
        vision_cfg = EncoderConfig(e.layers, e.vision_dim, e.heads, e.ff_dim, e.max_seq_len, e.output_dim)
        self.text_encoder = TextEncoder(text_cfg, seed=e.seed)
        self.vision_encoder = VisionEncoder(vision_cfg, t.channels, t.height, t.width, e.patch,
                                            seed=e.seed + 1)
        self.depth = resolve_prompt_depth(h.strategy, e.layers)
        self.cluster = PromptCluster(self.depth, h.n, e.text_dim, seed=h.seed, trainable=h.enabled)
        self.mapper = PromptMapper(e.text_dim, e.vision_dim, h.hidden or None, seed=h.seed + 1,
                                   trainable=h.enabled)
        self.use_pe = h.pe and h.enabled
        self.lsea = LseaParams(e.output_dim, l.heads, l.beta, l.head_dim or None, seed=l.seed,
                               trainable=l.enabled)
        self.descriptions = list(descriptions)
        self.class_tokens = [self.text_encoder.tokenizer.encode(d) for d in self.descriptions]

    @property
    def num_classes(self) -> int:
        return len(self.descriptions)

    # -- parameters --------------------------------------------------------
    def encoder_parameters(self) -> dict[str, Tensor]:
        out = {f"text_encoder.{k}": v for k, v in self.text_encoder.named_parameters().items()}
        out.update({f"vision_encoder.{k}": v for k, v in self.vision_encoder.named_parameters().items()})
        return out

    def prompt_parameters(self) -> dict[str, Tensor]:
        out = {f"htpc.{k}": v for k, v in self.cluster.named_parameters().items()}
        out.update({f"htpc.mapper.{k}": v for k, v in self.mapper.named_parameters().items()})
        return out

    def lsea_parameters(self) -> dict[str, Tensor]:
        return {f"lsea.{k}": v for k, v in self.lsea.named_parameters().items()}

    def state(self) -> dict[str, Tensor]:
        out = self.encoder_parameters()
        out.update(self.prompt_parameters())
        out.update(self.lsea_parameters())
        return out

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.state().items() if v.requires_grad}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.state().items()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        state = self.state()
        missing = set(state) - set(arrays)
        if missing:
            raise ContractError(f"checkpoint lacks tensors: {sorted(missing)[:5]}")
        for name, t in state.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ContractError(f"checkpoint tensor {name} has shape {arr.shape}, expected {t.shape}")
            t.data[...] = arr

    # -- forward -------------------------------------------------------------
    def text_features(self) -> Tensor:
        """``F_T`` of shape ``[c, d]``."""
        return self.text_encoder.encode_texts(self.class_tokens, build_text_schedule(self.cluster))

    def video_features(self, frames: np.ndarray) -> Tensor:
        """``F_V`` of shape ``[..., t, d]`` for frames ``[..., t, C, H, W]``."""
        num_frames = frames.shape[-4]
        schedule = build_visual_schedule(self.cluster, self.mapper, num_frames, self.use_pe)
        return self.vision_encoder.encode_frames(frames, schedule)

    def embed(self, frames: np.ndarray):
        """Returns ``(V_g [..., d_h], text side [c, d_h], FusionTrace | None)``."""
        text = self.text_features()
        video = self.video_features(frames)
        if self.cfg.lsea.enabled:
            fused, text_side, trace = aggregate(video, text, self.lsea)
        else:
            fused, text_side, trace = video.mean(axis=-2), text, None
        if self.cfg.lsea.normalize:
            fused, text_side = T.l2_normalize(fused), T.l2_normalize(text_side)
        return fused, text_side, trace

    def logits(self, frames: np.ndarray) -> Tensor:
        fused, text_side, _ = self.embed(frames)
        return fused @ text_side.T
