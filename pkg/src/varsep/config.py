"""Flat ``key=value`` experiment configuration."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .model import ModelConfig
from .training import LossWeights, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = ""
    out: str = "runs/default"
    seed: int = 0
    m: int = 0                          # 0: taken from the dataset
    d: int = 32
    p: int = 32
    tau: int = 4
    nu: int = 24
    combination: str = "product"
    use_static: bool = True
    dynamics: str = "resnet"
    K: int = 3
    H: int = 512
    gain: float = 0.71
    enc_hidden: tuple = (1200, 1200)
    dec_hidden: tuple = (1200, 1200, 1200)
    init_std: float = 0.02
    lambda_pred: float = 45.0
    lambda_ae: float = 1.0
    lambda_reg_s: float = 45.0
    lambda_reg_t: float = -1.0          # negative: p / 2 * 1e-3
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    lr_schedule: tuple = ()
    epochs: int = 250
    batch: int = 128
    chunks_per_epoch: int = 0
    train_sequences: int = 0            # 0: every training sequence
    checkpoint_every: int = 50
    horizons: tuple = (40,)
    eval_stride: int = 1

    # -- derived objects ----------------------------------------------------

    def resolved(self) -> "ExperimentConfig":
        if self.lambda_reg_t < 0:
            return replace(self, lambda_reg_t=0.5 * self.p * 1e-3)
        return self

    def model_config(self, m: int) -> ModelConfig:
        if self.m and self.m != m:
            raise ConfigError(f"config expects m={self.m} but the dataset has m={m}")
        cfg = ModelConfig(m=m, d=self.d, p=self.p, tau=self.tau, combination=self.combination,
                          enc_hidden=tuple(self.enc_hidden), dec_hidden=tuple(self.dec_hidden),
                          dynamics=self.dynamics, K=self.K, H=self.H, gain=self.gain, init_std=self.init_std)
        return cfg if self.use_static else cfg.without_static()

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch=self.batch, epochs=self.epochs, lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                           eps=self.eps, lr_schedule=tuple(self.lr_schedule), seed=self.seed, nu=self.nu,
                           tau=self.tau, chunks_per_epoch=self.chunks_per_epoch)

    def loss_weights(self) -> LossWeights:
        r = self.resolved()
        return LossWeights(r.lambda_pred, r.lambda_ae, r.lambda_reg_s, r.lambda_reg_t)

    # -- text form ----------------------------------------------------------

    def dumps(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in asdict(self).items())


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(f"{x[0]}:{x[1]!r}" if isinstance(x, tuple) else str(x) for x in v)
    return str(v)


def _parse_value(name: str, default, text: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [s for s in text.split(",") if s.strip()]
            if name == "lr_schedule":
                return tuple((int(a), float(b)) for a, b in (s.split(":") for s in items))
            return tuple(int(s) for s in items)
        return text
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {text!r}") from None


def loads(text: str, **overrides) -> ExperimentConfig:
    defaults = {f.name: f.default for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value")
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, defaults[key], value)
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    return ExperimentConfig(**values)


def load(path, **overrides) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), **overrides)
