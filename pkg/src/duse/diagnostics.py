"""Gradient checking of the full pipeline, fusion traces and 2-D embeddings."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .config import RunConfig
from .data import ClipBatch, generate_synthetic_dataset, stack_frames
from .model import DuseModel
from .tensor import finite_difference_check, no_grad
from .training import batch_loss

TINY_OVERRIDES = {
    "encoder.layers": 2,
    "encoder.text_dim": 16,
    "encoder.vision_dim": 16,
    "encoder.heads": 2,
    "encoder.ff_dim": 32,
    "encoder.output_dim": 8,
    "encoder.patch": 4,
    "htpc.n": 2,
    "htpc.strategy": "Deep",
    "lsea.heads": 2,
    "train.frames": 2,
    "train.classes": 3,
    "train.height": 8,
    "train.width": 8,
    "train.batch": 2,
}


def tiny_config(base: RunConfig | None = None) -> RunConfig:
    return (base or RunConfig()).replace(**TINY_OVERRIDES)


def pipeline_gradcheck(cfg: RunConfig, num_clips: int = 2, h: float = 1e-5) -> dict[str, float]:
    """Max relative error of every trainable tensor's gradient, per tensor name."""
    t = cfg.train
    clips, texts = generate_synthetic_dataset(t.classes, 1, t.frames, t.channels, t.height, t.width,
                                              t.sigma, t.seed)
    clips = clips[:num_clips]
    model = DuseModel(cfg, texts.descriptions)
    frames, labels = stack_frames(clips)
    return {
        name: finite_difference_check(lambda: batch_loss(model, frames, labels), [p], h)
        for name, p in model.trainable_parameters().items()
    }


def fusion_rows(model: DuseModel, clips: Sequence[ClipBatch], batch_size: int = 64):
    """Per-clip pool weights, per-head class attention and fused embeddings."""
    pool, alpha, fused, labels, ids = [], [], [], [], []
    with no_grad():
        for start in range(0, len(clips), batch_size):
            chunk = list(clips[start:start + batch_size])
            frames, lab = stack_frames(chunk)
            v_g, _, trace = model.embed(frames)
            fused.append(v_g.data)
            labels.extend(lab.tolist())
            ids.extend(c.clip_id for c in chunk)
            if trace is not None:
                pool.append(trace.pool_weights)
                alpha.append(trace.alpha)
    pool_rows, alpha_rows = [], []
    if pool:
        w, a = np.concatenate(pool), np.concatenate(alpha)
        for i, cid in enumerate(ids):
            pool_rows += [(cid, f, repr(float(w[i, f]))) for f in range(w.shape[1])]
            alpha_rows += [
                (cid, hd, k, repr(float(a[i, hd, k]))) for hd in range(a.shape[1]) for k in range(a.shape[2])
            ]
    return pool_rows, alpha_rows, np.concatenate(fused), np.array(labels), ids


def power_iteration_pca(x: np.ndarray, components: int = 2, iters: int = 500, seed: int = 0) -> np.ndarray:
    """Project rows of ``x`` on their top principal directions, found by deflated power iteration."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered
    rng = np.random.default_rng(seed)
    dirs = []
    for _ in range(min(components, x.shape[1])):
        v = rng.standard_normal(x.shape[1])
        for _ in range(iters):
            for u in dirs:
                v = v - (v @ u) * u
            w = cov @ v
            norm = np.linalg.norm(w)
            if norm < 1e-300:
                break
            v = w / norm
        # fix the sign so the largest-magnitude loading is positive
        v = v * (1.0 if v[np.argmax(np.abs(v))] >= 0 else -1.0)
        dirs.append(v)
    proj = centered @ np.array(dirs).T
    if proj.shape[1] < components:
        proj = np.hstack([proj, np.zeros((len(x), components - proj.shape[1]))])
    return proj
