"""Experiment configuration: a flat key-path = value text format,
parsed strictly (unknown keys are errors) into nested dataclasses."""
from __future__ import annotations

from dataclasses import dataclass, field, fields


class ConfigError(Exception):
    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"config key {key!r}: {reason}")


@dataclass
class DataConfig:
    n_train: int = 2000
    n_dev: int = 100
    n_eval: int = 200
    feat_dim: int = 16
    vocab_size: int = 16
    tokens_min: int = 5
    tokens_max: int = 8
    dur_min: int = 2
    dur_max: int = 4
    lead_silence: int = 2
    trail_silence: int = 2
    min_delay: int = 12
    noise_std: float = 0.05
    intra_silence: bool = False
    intra_silence_prob: float = 0.3
    intra_silence_max: int = 5
    frame_rate: int = 25


@dataclass
class ModelConfig:
    encoder: str = "rnnt"  # rnnt | tt
    unmix_hidden: int = 16
    enc_hidden: int = 32
    pred_hidden: int = 32
    embed_dim: int = 16
    joint_dim: int = 16
    chunk: int = 0  # required (>0) iff encoder == tt
    tt_layers: int = 1


@dataclass
class TrainConfig:
    steps: int = 1000
    batch: int = 8
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    seed: int = 0
    eos_warmup: int = 0  # steps trained without eos/penalty before enabling them
    lr_decay_step: int = 0  # step at which lr is multiplied by lr_decay (0 = never)
    lr_decay: float = 1.0
    avg_start: int = 0  # tail weight averaging from this step on (0 = off)


@dataclass
class LossConfig:
    rule: str = "heat"  # heat | pit
    eos: bool = True
    alpha: float = 0.0
    t_buffer: int = 3


@dataclass
class EvalConfig:
    thresholds: tuple = (5, 7, 9)


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self):
        d, m, t, l = self.data, self.model, self.train, self.loss
        positive = [
            ("data.feat_dim", d.feat_dim), ("data.vocab_size", d.vocab_size),
            ("data.tokens_min", d.tokens_min), ("data.dur_min", d.dur_min),
            ("model.unmix_hidden", m.unmix_hidden), ("model.enc_hidden", m.enc_hidden),
            ("model.pred_hidden", m.pred_hidden), ("model.embed_dim", m.embed_dim),
            ("model.joint_dim", m.joint_dim), ("train.batch", t.batch),
        ]
        for key, val in positive:
            if val <= 0:
                raise ConfigError(key, f"must be positive, got {val}")
        if d.tokens_max < d.tokens_min:
            raise ConfigError("data.tokens_max", "must be >= data.tokens_min")
        if d.dur_max < d.dur_min:
            raise ConfigError("data.dur_max", "must be >= data.dur_min")
        if m.encoder not in ("rnnt", "tt"):
            raise ConfigError("model.encoder", f"must be rnnt or tt, got {m.encoder!r}")
        if m.encoder == "tt" and m.chunk < 1:
            raise ConfigError("model.chunk", "required (>= 1) when model.encoder = tt")
        if m.encoder == "rnnt" and m.chunk != 0:
            raise ConfigError("model.chunk", "only valid when model.encoder = tt")
        if l.rule not in ("heat", "pit"):
            raise ConfigError("loss.rule", f"must be heat or pit, got {l.rule!r}")
        if l.alpha < 0:
            raise ConfigError("loss.alpha", "must be >= 0")
        if l.t_buffer < 0:
            raise ConfigError("loss.t_buffer", "must be >= 0")
        if t.steps < 0:
            raise ConfigError("train.steps", "must be >= 0")
        if t.eos_warmup < 0:
            raise ConfigError("train.eos_warmup", "must be >= 0")
        if t.lr_decay_step < 0:
            raise ConfigError("train.lr_decay_step", "must be >= 0")
        if not (0.0 < t.lr_decay <= 1.0):
            raise ConfigError("train.lr_decay", "must be in (0, 1]")
        if t.avg_start < 0:
            raise ConfigError("train.avg_start", "must be >= 0")
        return self


_SECTIONS = {
    "data": DataConfig, "model": ModelConfig, "train": TrainConfig,
    "loss": LossConfig, "eval": EvalConfig,
}


def _parse_value(key, raw, current):
    if isinstance(current, bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(key, f"expected a boolean, got {raw!r}")
    if isinstance(current, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if isinstance(current, tuple):
        try:
            return tuple(int(v.strip()) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ConfigError(key, f"expected comma-separated integers, got {raw!r}") from None
    return raw


def parse_config(text) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        parts = key.split(".")
        if len(parts) != 2 or parts[0] not in _SECTIONS:
            raise ConfigError(key, "unknown section")
        section = getattr(cfg, parts[0])
        if parts[1] not in {f.name for f in fields(section)}:
            raise ConfigError(key, "unknown key")
        current = getattr(section, parts[1])
        setattr(section, parts[1], _parse_value(key, raw, current))
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def _format_value(val):
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        return ",".join(str(v) for v in val)
    return repr(val) if isinstance(val, float) else str(val)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section_name in sorted(_SECTIONS):
        section = getattr(cfg, section_name)
        for f in sorted(fields(section), key=lambda f: f.name):
            lines.append(f"{section_name}.{f.name} = {_format_value(getattr(section, f.name))}")
    return "\n".join(lines) + "\n"


def config_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for section_name in sorted(_SECTIONS):
        section = getattr(cfg, section_name)
        for f in sorted(fields(section), key=lambda f: f.name):
            val = getattr(section, f.name)
            out[f"{section_name}.{f.name}"] = list(val) if isinstance(val, tuple) else val
    return out
