"""Contrastive objective, Adam, metrics, the training loop and ablations."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .config import RunConfig
from .data import ClipBatch, ClassTexts, generate_synthetic_dataset, stack_frames
from .errors import ConfigurationError, ContractError, NumericalError
from .model import DuseModel
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)


# -- objective -----------------------------------------------------------------

def contrastive_loss(fused: Tensor, text: Tensor, cls, temperature: float = 1.0,
                     normalize: bool = False) -> Tensor:
    """``-log softmax(V_g . F_T(i) / T)[cls]``, averaged over a leading batch axis.

    ``fused`` is ``[d]`` or ``[B, d]``; ``text`` is ``[c, d]``.
    """
    if normalize:
        fused, text = T.l2_normalize(fused), T.l2_normalize(text)
    single = fused.ndim == 1
    if single:
        fused = fused.reshape(1, -1)
    sims = fused @ text.T
    return similarity_loss(sims, [cls] if single else cls, temperature)


def similarity_loss(sims: Tensor, cls, temperature: float = 1.0) -> Tensor:
    """Mean cross-entropy of ``softmax(sims / T)`` at the true classes; ``sims`` is ``[B, c]``."""
    labels = np.asarray(cls, dtype=np.intp).reshape(-1)
    c = sims.shape[-1]
    if labels.shape[0] != sims.shape[0]:
        raise ContractError(f"{labels.shape[0]} labels for {sims.shape[0]} similarity rows")
    if (labels < 0).any() or (labels >= c).any():
        raise ContractError(f"class label out of range [0, {c}): {labels.tolist()}")
    logp = T.log_softmax(sims * (1.0 / temperature), axis=-1)
    return -(logp[np.arange(len(labels)), labels].mean())


# -- optimizer -------------------------------------------------------------------

@dataclass
class OptimizerState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray | None],
              state: OptimizerState) -> None:
    """Bias-corrected Adam update applied in place to ``params``."""
    for name in params:
        if grads.get(name) is None:
            raise ContractError(f"no gradient for parameter {name!r}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# -- metrics -------------------------------------------------------------------

@dataclass
class Metrics:
    per_class_recall: np.ndarray  # nan for classes absent from the evaluation set
    uar: float
    war: float
    confusion: np.ndarray  # rows: true class, columns: predicted class
    predictions: np.ndarray


def compute_metrics(labels, predictions, num_classes: int) -> Metrics:
    labels = np.asarray(labels, dtype=np.intp)
    predictions = np.asarray(predictions, dtype=np.intp)
    if labels.size == 0:
        raise ContractError("cannot compute metrics on an empty evaluation set")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    counts = confusion.sum(axis=1)
    present = counts > 0
    recall = np.full(num_classes, np.nan)
    recall[present] = np.diag(confusion)[present] / counts[present]
    if not present.all():
        warnings.warn(
            f"classes {np.flatnonzero(~present).tolist()} are absent from the evaluation set "
            "and excluded from UAR",
            RuntimeWarning, stacklevel=2,
        )
    uar = float(recall[present].mean())
    war = float((counts[present] / counts.sum() * recall[present]).sum())
    return Metrics(recall, uar, war, confusion, predictions)


def predict(model: DuseModel, clips: Sequence[ClipBatch], batch_size: int = 64) -> np.ndarray:
    preds = []
    with no_grad():
        for start in range(0, len(clips), batch_size):
            frames, _ = stack_frames(list(clips[start:start + batch_size]))
            preds.append(model.logits(frames).data.argmax(axis=-1))
    return np.concatenate(preds)


def evaluate(model: DuseModel, clips: Sequence[ClipBatch], batch_size: int = 64) -> Metrics:
    """Argmax of ``V_g . F_T(i)`` per clip, summarized as UAR/WAR/confusion."""
    if not clips:
        raise ContractError("cannot evaluate an empty clip set")
    clips = sorted(clips, key=lambda c: c.clip_id)
    labels = np.array([c.label for c in clips])
    return compute_metrics(labels, predict(model, clips, batch_size), model.num_classes)


# -- training loop ---------------------------------------------------------------

@dataclass
class TrainResult:
    model: DuseModel
    history: list[dict]
    metrics: Metrics
    initial_state: dict[str, np.ndarray]
    texts: ClassTexts


def make_datasets(cfg: RunConfig):
    t = cfg.train
    shape = (t.frames, t.channels, t.height, t.width)
    train_set, texts = generate_synthetic_dataset(t.classes, t.clips_per_class, *shape, t.sigma, t.seed, "train")
    eval_set, _ = generate_synthetic_dataset(t.classes, t.eval_clips_per_class, *shape, t.sigma, t.seed, "eval")
    return train_set, eval_set, texts


def batch_loss(model: DuseModel, frames: np.ndarray, labels: np.ndarray) -> Tensor:
    fused, text_side, _ = model.embed(frames)
    return similarity_loss(fused @ text_side.T, labels, model.cfg.train.temperature)


def train(cfg: RunConfig, max_steps: int | None = None, datasets=None) -> TrainResult:
    """Train the prompt cluster, mapper and aggregator with Adam; encoders stay frozen.

    One row per epoch is logged: mean batch loss plus UAR/WAR on the eval split.
    ``max_steps`` stops early after that many optimizer steps (the epoch
    in progress is still evaluated).
    """
    train_set, eval_set, texts = datasets or make_datasets(cfg)
    model = DuseModel(cfg, texts.descriptions)
    initial = model.state_dict()
    params = model.trainable_parameters()
    state = OptimizerState(lr=cfg.train.lr)
    rng = np.random.default_rng([cfg.train.seed, 2])
    history: list[dict] = []
    metrics = evaluate(model, eval_set)
    steps = 0
    for epoch in range(1, cfg.train.epochs + 1):
        order = rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), cfg.train.batch):
            idx = order[start:start + cfg.train.batch]
            frames, labels = stack_frames([train_set[i] for i in idx])
            for p in params.values():
                p.grad = None
            loss = batch_loss(model, frames, labels)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, step {steps}; clip ids "
                    f"{[train_set[i].clip_id for i in idx]}; parameter norms "
                    f"{ {k: float(np.linalg.norm(v.data)) for k, v in params.items()} }"
                )
            losses.append(value)
            if params:
                loss.backward()
                adam_step(params, {k: v.grad for k, v in params.items()}, state)
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        metrics = evaluate(model, eval_set)
        row = {"epoch": epoch, "loss": float(np.mean(losses)), "uar": metrics.uar, "war": metrics.war}
        history.append(row)
        log.info("epoch %d loss %.5f uar %.4f war %.4f", epoch, row["loss"], row["uar"], row["war"])
        if max_steps is not None and steps >= max_steps:
            break
    return TrainResult(model, history, metrics, initial, texts)


# -- ablations -------------------------------------------------------------------

VARIANT_KEYS = {
    "htpc": "htpc.enabled",
    "lsea": "lsea.enabled",
    "strategy": "htpc.strategy",
    "heads": "lsea.heads",
    "beta": "lsea.beta",
}


def _variant_overrides(variant: Mapping[str, object]) -> dict[str, object]:
    out = {}
    for key, value in variant.items():
        if key not in VARIANT_KEYS:
            raise ConfigurationError(f"unknown ablation variant key {key!r}; expected one of {sorted(VARIANT_KEYS)}")
        if key in ("htpc", "lsea") and isinstance(value, str):
            value = value.lower() in ("on", "true", "1", "yes")
        out[VARIANT_KEYS[key]] = value
    return out


def variant_name(variant: Mapping[str, object]) -> str:
    def fmt(v):
        if isinstance(v, bool):
            return "on" if v else "off"
        return str(v)

    return ";".join(f"{k}={fmt(v)}" for k, v in variant.items())


def module_grid() -> list[dict]:
    return [{"htpc": h, "lsea": l} for h, l in ((False, False), (False, True), (True, False), (True, True))]


def strategy_grid() -> list[dict]:
    return [{"strategy": s} for s in ("Shallow", "Normal", "Deep")]


def heads_grid() -> list[dict]:
    return [{"heads": n} for n in (2, 4, 6)]


def beta_grid() -> list[dict]:
    return [{"beta": b} for b in (0.3, 0.5, 0.7, 0.9)]


GRIDS = {
    "modules": module_grid,
    "strategy": strategy_grid,
    "heads": heads_grid,
    "beta": beta_grid,
}


def ablation_run(cfg: RunConfig, variants: Sequence[Mapping[str, object]]) -> list[dict]:
    """Train every variant from the same seeds and budget; one row per variant."""
    overrides = [_variant_overrides(v) for v in variants]
    datasets = make_datasets(cfg)
    rows = []
    for variant, override in zip(variants, overrides):
        result = train(cfg.replace(**override), datasets=datasets)
        rows.append({
            "variant": variant_name(variant),
            "uar": result.metrics.uar,
            "war": result.metrics.war,
            "loss": result.history[-1]["loss"] if result.history else float("nan"),
        })
    return rows
