"""Run configuration: flat ``section.key = value`` text files plus overrides."""
from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigurationError
from .htpc import DepthStrategy, check_strategy_for_profile


@dataclass
class EncoderSection:
    layers: int = 6
    text_dim: int = 64
    vision_dim: int = 64
    heads: int = 4
    ff_dim: int = 128
    output_dim: int = 32
    max_seq_len: int = 32
    patch: int = 8
    seed: int = 0
    profile: str = "small"


@dataclass
class HtpcSection:
    enabled: bool = True
    n: int = 4
    strategy: str = "Normal"
    pe: bool = True
    hidden: int = 0  # 0 -> text_dim
    force_deep: bool = False
    seed: int = 1


@dataclass
class LseaSection:
    enabled: bool = True
    heads: int = 4
    beta: float = 0.7
    head_dim: int = 0  # 0 -> output_dim // heads
    normalize: bool = False
    seed: int = 2


@dataclass
class TrainSection:
    lr: float = 0.001
    batch: int = 16
    epochs: int = 30
    frames: int = 8
    classes: int = 4
    clips_per_class: int = 50
    eval_clips_per_class: int = 25
    sigma: float = 0.05
    seed: int = 7
    temperature: float = 1.0
    channels: int = 1
    height: int = 16
    width: int = 16


@dataclass
class PathsSection:
    out: str = "runs"
    checkpoint: str = ""


@dataclass
class RunConfig:
    encoder: EncoderSection = field(default_factory=EncoderSection)
    htpc: HtpcSection = field(default_factory=HtpcSection)
    lsea: LseaSection = field(default_factory=LseaSection)
    train: TrainSection = field(default_factory=TrainSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def items(self) -> list[tuple[str, object]]:
        out = []
        for section in dataclasses.fields(self):
            obj = getattr(self, section.name)
            for f in dataclasses.fields(obj):
                out.append((f"{section.name}.{f.name}", getattr(obj, f.name)))
        return out

    def replace(self, **overrides) -> "RunConfig":
        """Copy with ``section__key=value`` or ``{"section.key": value}`` overrides applied."""
        cfg = dataclasses.replace(
            self, **{s.name: dataclasses.replace(getattr(self, s.name)) for s in dataclasses.fields(self)}
        )
        for key, value in overrides.items():
            _assign(cfg, key.replace("__", "."), value)
        validate(cfg)
        return cfg

    def config_hash(self) -> str:
        body = "\n".join(f"{k}={v!r}" for k, v in self.items() if not k.startswith("paths."))
        return hashlib.sha256(body.encode()).hexdigest()[:16]

    def header(self) -> str:
        return f"# duse config={self.config_hash()} seed={self.train.seed}"

    def to_text(self, include_paths: bool = True) -> str:
        return "".join(
            f"{k} = {_format(v)}\n" for k, v in self.items() if include_paths or not k.startswith("paths.")
        )


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(key: str, kind, raw):
    if not isinstance(raw, str):
        if kind is bool and isinstance(raw, bool):
            return raw
        if kind is float and isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return float(raw)
        if kind is int and isinstance(raw, int) and not isinstance(raw, bool):
            return raw
        if kind is str:
            return str(raw)
        raise ConfigurationError(f"{key}: expected {kind.__name__}, got {raw!r}")
    text = raw.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: expected {kind.__name__}, got {text!r}") from None
    return text


_KINDS = {"int": int, "float": float, "bool": bool, "str": str}


def _assign(cfg: RunConfig, key: str, raw) -> None:
    section_name, _, name = key.strip().partition(".")
    section = getattr(cfg, section_name, None) if section_name in {f.name for f in dataclasses.fields(cfg)} else None
    if section is None or not name or name not in {f.name for f in dataclasses.fields(section)}:
        raise ConfigurationError(f"unknown config key {key!r}")
    kind = _KINDS[next(f.type for f in dataclasses.fields(section) if f.name == name)]
    setattr(section, name, _coerce(key, kind, raw))


def validate(cfg: RunConfig) -> RunConfig:
    e, h, l, t = cfg.encoder, cfg.htpc, cfg.lsea, cfg.train
    positive = {
        "encoder.layers": e.layers, "encoder.text_dim": e.text_dim, "encoder.vision_dim": e.vision_dim,
        "encoder.heads": e.heads, "encoder.ff_dim": e.ff_dim, "encoder.output_dim": e.output_dim,
        "encoder.max_seq_len": e.max_seq_len, "encoder.patch": e.patch, "htpc.n": h.n,
        "lsea.heads": l.heads, "train.batch": t.batch, "train.frames": t.frames,
        "train.clips_per_class": t.clips_per_class, "train.eval_clips_per_class": t.eval_clips_per_class,
        "train.channels": t.channels, "train.height": t.height, "train.width": t.width,
    }
    for key, value in positive.items():
        if value < 1:
            raise ConfigurationError(f"{key} must be >= 1, got {value}")
    for key, value in {"htpc.hidden": h.hidden, "lsea.head_dim": l.head_dim, "train.epochs": t.epochs}.items():
        if value < 0:
            raise ConfigurationError(f"{key} must be >= 0, got {value}")
    if e.text_dim % e.heads or e.vision_dim % e.heads:
        raise ConfigurationError("encoder.heads must divide encoder.text_dim and encoder.vision_dim")
    if e.vision_dim % 2:
        raise ConfigurationError("encoder.vision_dim must be even for the temporal encoding")
    if e.profile not in ("small", "large"):
        raise ConfigurationError(f"encoder.profile must be 'small' or 'large', got {e.profile!r}")
    if t.height % e.patch or t.width % e.patch:
        raise ConfigurationError("encoder.patch must divide train.height and train.width")
    try:
        h.strategy = DepthStrategy.parse(h.strategy).value
    except ConfigurationError as exc:
        raise ConfigurationError(f"htpc.strategy: {exc}") from None
    check_strategy_for_profile(h.strategy, e.profile, h.force_deep)
    if not 0.0 <= l.beta <= 1.0:
        raise ConfigurationError(f"lsea.beta must lie in [0, 1], got {l.beta}")
    if not t.lr >= 0.0:
        raise ConfigurationError(f"train.lr must be >= 0, got {t.lr}")
    if not t.temperature > 0.0:
        raise ConfigurationError(f"train.temperature must be > 0, got {t.temperature}")
    if not t.sigma >= 0.0:
        raise ConfigurationError(f"train.sigma must be >= 0, got {t.sigma}")
    if t.classes < 2:
        raise ConfigurationError(f"train.classes must be >= 2, got {t.classes}")
    return cfg


def parse_lines(lines: Iterable[str]) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        pairs.append((key.strip(), value.strip()))
    return pairs


def parse_config(path: str | os.PathLike | None = None, overrides: Iterable[str] = (),
                 force_deep: bool = False, env: Mapping[str, str] | None = None) -> RunConfig:
    """Build a validated :class:`RunConfig`.

    Precedence, lowest first: defaults, the file at ``path``, ``overrides``
    (``"key=value"`` strings), ``force_deep``, then ``DUSE_SEED`` from ``env``.
    """
    env = os.environ if env is None else env
    cfg = RunConfig()
    pairs = []
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file {str(p)!r} does not exist")
        pairs += parse_lines(p.read_text().splitlines())
    pairs += parse_lines(overrides)
    for key, value in pairs:
        _assign(cfg, key, value)
    if force_deep:
        cfg.htpc.force_deep = True
    if env.get("DUSE_SEED"):
        _assign(cfg, "train.seed", env["DUSE_SEED"])
    return validate(cfg)
