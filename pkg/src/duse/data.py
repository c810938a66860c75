"""Synthetic video clips with class-specific spatial and temporal structure."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

EMOTIONS = ("happy", "sad", "neutral", "angry", "surprise", "disgust", "fear")
DESCRIPTIONS = {
    "happy": "a face showing happy expression with raised cheeks and smiling mouth",
    "sad": "a face showing sad expression with drooping lips and lowered brows",
    "neutral": "a face showing neutral expression with relaxed calm features",
    "angry": "a face showing angry expression with furrowed brows and clenched jaw",
    "surprise": "a face showing surprise expression with wide eyes and open mouth",
    "disgust": "a face showing disgust expression with wrinkled nose and curled lip",
    "fear": "a face showing fear expression with widened eyes and tense mouth",
}
SPLITS = {"train": 0, "eval": 1}


@dataclass
class ClipBatch:
    frames: np.ndarray  # [t, C, H, W], values in [0, 1]
    label: int
    clip_id: int


@dataclass
class ClassTexts:
    labels: list[str]
    descriptions: list[str]

    def __len__(self) -> int:
        return len(self.labels)


def class_texts(num_classes: int) -> ClassTexts:
    if not 2 <= num_classes <= len(EMOTIONS):
        raise ConfigurationError(f"number of classes must be in [2, {len(EMOTIONS)}], got {num_classes}")
    labels = list(EMOTIONS[:num_classes])
    return ClassTexts(labels, [DESCRIPTIONS[k] for k in labels])


def class_prototypes(num_classes: int, frames: int, channels: int, height: int, width: int,
                     seed: int) -> np.ndarray:
    """Noise-free clips ``[c, t, C, H, W]``.

    Class ``k`` owns a blob pattern and an intensity drift
    ``0.75 + 0.25 sin(2 pi (k + 1) f / t + phase_k)``.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    protos = np.empty((num_classes, frames, channels, height, width))
    f = np.arange(frames)
    for k in range(num_classes):
        pattern = np.zeros((channels, height, width))
        for ch in range(channels):
            for _ in range(3):
                cy, cx = rng.uniform(0.1, 0.9, 2)
                width_ = rng.uniform(0.08, 0.25)
                pattern[ch] += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width_ ** 2))
        pattern = 0.1 + 0.8 * (pattern - pattern.min()) / max(np.ptp(pattern), 1e-12)
        phase = rng.uniform(0, 2 * np.pi)
        drift = 0.75 + 0.25 * np.sin(2 * np.pi * (k + 1) * f / frames + phase)
        protos[k] = drift[:, None, None, None] * pattern[None]
    return protos


def generate_synthetic_dataset(num_classes: int, clips_per_class: int, frames: int, channels: int,
                               height: int, width: int, sigma: float, seed: int,
                               split: str = "train") -> tuple[list[ClipBatch], ClassTexts]:
    """Prototype-plus-noise clips, class-major order, deterministic in ``(seed, split)``.

    Prototypes depend on ``seed`` only, so the train and eval splits share
    classes but draw independent noise.
    """
    if sigma < 0:
        raise ConfigurationError(f"sigma must be >= 0, got {sigma}")
    texts = class_texts(num_classes)
    protos = class_prototypes(num_classes, frames, channels, height, width, seed)
    noise_rng = np.random.default_rng([seed, SPLITS[split]])
    clips = []
    for k in range(num_classes):
        for _ in range(clips_per_class):
            noisy = protos[k] + sigma * noise_rng.standard_normal(protos[k].shape)
            clips.append(ClipBatch(np.clip(noisy, 0.0, 1.0), k, len(clips)))
    return clips, texts


def nearest_prototype_predict(clips: list[ClipBatch], prototypes: np.ndarray) -> np.ndarray:
    """Label of the closest prototype in squared L2 distance."""
    flat = prototypes.reshape(len(prototypes), -1)
    x = np.stack([c.frames.reshape(-1) for c in clips])
    d2 = ((x[:, None, :] - flat[None]) ** 2).sum(-1)
    return d2.argmin(axis=1)


def stack_frames(clips: list[ClipBatch]) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([c.frames for c in clips]), np.array([c.label for c in clips])
