"""Frozen CLIP-style transformer towers with per-layer prompt injection.

The towers stand in for pretrained CLIP encoders: weights are drawn once from
a seeded generator and frozen. Prompt tokens are appended after the sequence
at each affected layer and their output rows are dropped before the next one.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import CapacityError, ConfigurationError, DimensionError
from .tensor import Tensor

MASK_VALUE = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int
    model_dim: int
    num_heads: int
    ff_dim: int
    max_seq_len: int
    output_dim: int

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigurationError(f"{f.name} must be a positive int, got {value!r}")
        if self.model_dim % self.num_heads:
            raise ConfigurationError(
                f"model_dim {self.model_dim} is not divisible by num_heads {self.num_heads}"
            )


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor, mask=None, return_weights=False):
    """``softmax(q kᵀ / sqrt(d_k)) v`` over the last two axes.

    ``mask`` is an additive array broadcastable to the logits; masked keys
    carry a large negative value.
    """
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"attention: query width {q.shape} != key width {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention: key length {k.shape} != value length {v.shape}")
    logits = (q @ k.T) * (1.0 / math.sqrt(q.shape[-1]))
    if mask is not None:
        logits = logits + Tensor(mask)
    weights = T.softmax(logits, axis=-1)
    out = weights @ v
    return (out, weights) if return_weights else out


class EncoderLayer:
    """Pre-norm residual block: ``x + MHA(LN(x))`` then ``+ FFN(LN(.))``."""

    names = ("ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
             "ln2_g", "ln2_b", "w1", "b1", "w2", "b2")

    def __init__(self, dim: int, ff_dim: int, num_heads: int, rng: np.random.Generator):
        self.num_heads = num_heads
        s_in, s_ff = dim ** -0.5, ff_dim ** -0.5
        self.ln1_g, self.ln1_b = Tensor(np.ones(dim)), Tensor(np.zeros(dim))
        self.wq = Tensor(rng.normal(0.0, s_in, (dim, dim)))
        self.bq = Tensor(np.zeros(dim))
        self.wk = Tensor(rng.normal(0.0, s_in, (dim, dim)))
        self.bk = Tensor(np.zeros(dim))
        self.wv = Tensor(rng.normal(0.0, s_in, (dim, dim)))
        self.bv = Tensor(np.zeros(dim))
        self.wo = Tensor(rng.normal(0.0, s_in, (dim, dim)))
        self.bo = Tensor(np.zeros(dim))
        self.ln2_g, self.ln2_b = Tensor(np.ones(dim)), Tensor(np.zeros(dim))
        self.w1 = Tensor(rng.normal(0.0, s_in, (dim, ff_dim)))
        self.b1 = Tensor(np.zeros(ff_dim))
        self.w2 = Tensor(rng.normal(0.0, s_ff, (ff_dim, dim)))
        self.b2 = Tensor(np.zeros(dim))

    def params(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in self.names}

    def _split(self, x: Tensor) -> Tensor:
        *lead, s, dim = x.shape
        heads = self.num_heads
        x = x.reshape(*lead, s, heads, dim // heads)
        n = len(lead)
        return x.transpose(*range(n), n + 1, n, n + 2)

    def _merge(self, x: Tensor) -> Tensor:
        *lead, heads, s, dh = x.shape
        n = len(lead)
        return x.transpose(*range(n), n + 1, n, n + 2).reshape(*lead, s, heads * dh)

    def __call__(self, x: Tensor, mask=None) -> Tensor:
        h = T.layer_norm(x, self.ln1_g, self.ln1_b)
        q = self._split(h @ self.wq + self.bq)
        k = self._split(h @ self.wk + self.bk)
        v = self._split(h @ self.wv + self.bv)
        attn = self._merge(scaled_dot_product_attention(q, k, v, mask))
        x = x + (attn @ self.wo + self.bo)
        h = T.layer_norm(x, self.ln2_g, self.ln2_b)
        return x + (T.quick_gelu(h @ self.w1 + self.b1) @ self.w2 + self.b2)


class Encoder:
    """Shared machinery of the text and vision towers."""

    def __init__(self, config: EncoderConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        dim = config.model_dim
        self.layers = [
            EncoderLayer(dim, config.ff_dim, config.num_heads, self.rng)
            for _ in range(config.num_layers)
        ]
        self.ln_post_g, self.ln_post_b = Tensor(np.ones(dim)), Tensor(np.zeros(dim))
        self.proj = Tensor(self.rng.normal(0.0, dim ** -0.5, (dim, config.output_dim)))
        self.frozen = True

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, t in layer.params().items():
                out[f"layers.{i}.{name}"] = t
        out["ln_post_g"] = self.ln_post_g
        out["ln_post_b"] = self.ln_post_b
        out["proj"] = self.proj
        return out

    def freeze(self) -> None:
        for t in self.named_parameters().values():
            t.requires_grad = False
            t.grad = None
        self.frozen = True

    def unfreeze(self) -> None:
        for t in self.named_parameters().values():
            t.requires_grad = True
        self.frozen = False

    def encoder_layer_forward(self, layer: int, x: Tensor, mask=None) -> Tensor:
        if not 0 <= layer < len(self.layers):
            raise ConfigurationError(f"layer {layer} out of range for {len(self.layers)} layers")
        if x.shape[-1] != self.config.model_dim:
            raise DimensionError(f"layer input width {x.shape[-1]} != model_dim {self.config.model_dim}")
        return self.layers[layer](x, mask)

    def run_layers(self, x: Tensor, prompts: Sequence[Tensor], mask=None, activations=None) -> Tensor:
        """Run every layer, appending ``prompts[i]`` to the input of layer ``i``.

        ``x`` has shape ``(*lead, s, D)``; each prompt must broadcast to
        ``(*lead, n, D)``. Rows produced at prompt positions are discarded.
        """
        if len(prompts) > len(self.layers):
            raise ConfigurationError(
                f"{len(prompts)} prompt streams exceed the {len(self.layers)} encoder layers"
            )
        *lead, base_len, dim = x.shape
        for i, layer in enumerate(self.layers):
            if i < len(prompts):
                p = prompts[i]
                n = p.shape[-2]
                if base_len + n > self.config.max_seq_len:
                    raise CapacityError(
                        f"sequence of {base_len} tokens plus {n} prompts exceeds max_seq_len "
                        f"{self.config.max_seq_len}"
                    )
                p = T.broadcast_to(p, (*lead, n, dim))
                layer_mask = mask
                if mask is not None:
                    pad = np.zeros(mask.shape[:-1] + (n,))
                    layer_mask = np.concatenate([mask, pad], axis=-1)
                y = self.encoder_layer_forward(i, T.concat([x, p], axis=-2), layer_mask)
                if activations is not None:
                    activations.append(y)
                x = y[..., :base_len, :]
            else:
                x = self.encoder_layer_forward(i, x, mask)
                if activations is not None:
                    activations.append(x)
        return x

    def project(self, rows: Tensor) -> Tensor:
        normed = T.layer_norm(rows, self.ln_post_g, self.ln_post_b)
        if normed.ndim == 1:
            return (normed.reshape(1, -1) @ self.proj)[0]
        return normed @ self.proj


# -- text ----------------------------------------------------------------------

SPECIALS = ("<pad>", "<sot>", "<eot>", "<unk>")
WORDS = (
    "a an the of with and or in is are face person showing expression looks "
    "happy sad neutral angry surprise surprised disgust disgusted fear fearful "
    "smiling smile raised cheeks crinkled eyes lips corners upturned downturned "
    "drooping lowered brows eyebrows relaxed calm still flat features furrowed "
    "clenched jaw tight glaring wide open mouth dropped jaw wrinkled nose curled "
    "upper lip tense widened trembling pale gaze averted tearful frown squint "
    "bright joyful gloomy tired blank composed hostile shocked startled repulsed "
    "anxious nervous"
).split()


class Tokenizer:
    """Whitespace tokenizer over a fixed vocabulary with an out-of-vocabulary bucket."""

    def __init__(self, words: Sequence[str] = WORDS):
        self.vocab: dict[str, int] = {}
        for w in (*SPECIALS, *words):
            self.vocab.setdefault(w, len(self.vocab))
        self.pad, self.sot, self.eot, self.unk = (self.vocab[s] for s in SPECIALS)

    def __len__(self) -> int:
        return len(self.vocab)

    def encode(self, text: str) -> list[int]:
        words = re.findall(r"[a-z]+", text.lower())
        return [self.sot, *(self.vocab.get(w, self.unk) for w in words), self.eot]


class TextEncoder(Encoder):
    """Text tower; the class position is the final (end-of-text) token."""

    def __init__(self, config: EncoderConfig, seed: int = 0, tokenizer: Tokenizer | None = None):
        super().__init__(config, seed)
        self.tokenizer = tokenizer or Tokenizer()
        dim = config.model_dim
        self.token_embedding = Tensor(self.rng.normal(0.0, 1.0, (len(self.tokenizer), dim)))
        self.pos_embedding = Tensor(self.rng.normal(0.0, 0.1, (config.max_seq_len, dim)))
        self.freeze()

    def named_parameters(self) -> dict[str, Tensor]:
        out = {"token_embedding": self.token_embedding, "pos_embedding": self.pos_embedding}
        out.update(super().named_parameters())
        return out

    def embed(self, token_seqs: Sequence[Sequence[int]]):
        """Padded embeddings ``[c, L, D]``, key mask ``[c, 1, 1, L]`` and end positions."""
        lengths = [len(s) for s in token_seqs]
        width = max(lengths)
        if width > self.config.max_seq_len:
            raise CapacityError(f"text of {width} tokens exceeds max_seq_len {self.config.max_seq_len}")
        ids = np.full((len(token_seqs), width), self.tokenizer.pad, dtype=np.intp)
        mask = np.zeros((len(token_seqs), 1, 1, width))
        for i, seq in enumerate(token_seqs):
            ids[i, : len(seq)] = seq
            mask[i, ..., len(seq):] = MASK_VALUE
        x = self.token_embedding[ids] + self.pos_embedding[:width]
        return x, mask, np.asarray(lengths) - 1

    def encode_texts(self, token_seqs: Sequence[Sequence[int]], prompts: Sequence[Tensor] = (),
                     activations=None) -> Tensor:
        """Encode ``c`` token sequences to ``[c, output_dim]``."""
        x, mask, ends = self.embed(token_seqs)
        x = self.run_layers(x, prompts, mask, activations)
        return self.project(x[np.arange(len(ends)), ends])

    def encode_text_with_prompts(self, tokens: Sequence[int], prompts: Sequence[Tensor] = ()) -> Tensor:
        return self.encode_texts([tokens], prompts)[0]


# -- vision --------------------------------------------------------------------

class VisionEncoder(Encoder):
    """Vision tower over ``C x H x W`` frames cut into square patches.

    The class position is a prepended learned token.
    """

    def __init__(self, config: EncoderConfig, channels: int, height: int, width: int,
                 patch: int, seed: int = 0):
        if patch < 1 or height % patch or width % patch:
            raise ConfigurationError(f"frame {height}x{width} is not divisible into {patch}x{patch} patches")
        super().__init__(config, seed)
        self.channels, self.height, self.width, self.patch = channels, height, width, patch
        self.base_len = 1 + (height // patch) * (width // patch)
        if self.base_len > config.max_seq_len:
            raise CapacityError(f"{self.base_len} patch tokens exceed max_seq_len {config.max_seq_len}")
        dim = config.model_dim
        patch_dim = channels * patch * patch
        self.patch_embedding = Tensor(self.rng.normal(0.0, patch_dim ** -0.5, (patch_dim, dim)))
        self.class_token = Tensor(self.rng.normal(0.0, dim ** -0.5, dim))
        self.pos_embedding = Tensor(self.rng.normal(0.0, dim ** -0.5, (self.base_len, dim)))
        self.freeze()

    def named_parameters(self) -> dict[str, Tensor]:
        out = {
            "patch_embedding": self.patch_embedding,
            "class_token": self.class_token,
            "pos_embedding": self.pos_embedding,
        }
        out.update(super().named_parameters())
        return out

    def patchify(self, frames) -> Tensor:
        """``(*lead, C, H, W)`` pixels to ``(*lead, base_len, D)`` token embeddings."""
        frames = np.asarray(frames.data if isinstance(frames, Tensor) else frames, dtype=np.float64)
        *lead, c, h, w = frames.shape
        p = self.patch
        if (c, h, w) != (self.channels, self.height, self.width):
            if h % p or w % p:
                raise ConfigurationError(f"frame {h}x{w} is not divisible into {p}x{p} patches")
            raise DimensionError(
                f"frame shape {(c, h, w)} != configured {(self.channels, self.height, self.width)}"
            )
        n = len(lead)
        patches = frames.reshape(*lead, c, h // p, p, w // p, p)
        patches = patches.transpose(*range(n), n + 1, n + 3, n, n + 2, n + 4)
        patches = Tensor(patches.reshape(*lead, (h // p) * (w // p), c * p * p))
        tokens = patches @ self.patch_embedding
        cls = T.broadcast_to(self.class_token, (*lead, 1, self.config.model_dim))
        return T.concat([cls, tokens], axis=-2) + self.pos_embedding

    def encode_frames(self, frames, prompts: Sequence[Tensor] = (), activations=None) -> Tensor:
        """Encode ``(*lead, C, H, W)`` frames to ``(*lead, output_dim)``."""
        x = self.run_layers(self.patchify(frames), prompts, None, activations)
        return self.project(x[..., 0, :])

    def encode_video_with_prompts(self, frames, prompts: Sequence[Tensor] = ()) -> Tensor:
        """One clip ``[t, C, H, W]`` to ``F_V`` of shape ``[t, output_dim]``.

        ``prompts[0]`` may be per-frame (``[t, n, D]``); deeper streams are
        ``[n, D]`` and shared by every frame.
        """
        return self.encode_frames(frames, prompts)
