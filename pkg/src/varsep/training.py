"""Loss terms, the weighted objective, Adam and the training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Var
from .model import (ModelConfig, combine, decode, encode_dynamic, encode_static, flatten_windows,
                    integrate_latent)

log = logging.getLogger(__name__)

TERMS = ("loss_pred", "loss_ae", "loss_reg_s", "loss_reg_t")


@dataclass(frozen=True)
class LossWeights:
    pred: float = 45.0
    ae: float = 1.0
    reg_s: float = 45.0
    reg_t: float = 0.016

    def __post_init__(self):
        if min(self.pred, self.ae, self.reg_s, self.reg_t) < 0:
            raise ValueError("loss weights must be nonnegative")

    @classmethod
    def waveeq(cls, p: int) -> "LossWeights":
        return cls(pred=45.0, ae=1.0, reg_s=45.0, reg_t=0.5 * p * 1e-3)


# ---------------------------------------------------------------------------
# loss terms (batched; every term is a mean over the batch)


def loss_pred(pred: Var, target: Var) -> Var:
    """Mean over frames of the per-frame mean squared error."""
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ")
    return ad.mean(ad.square(pred - target))


def sample_ae_index(rng: np.random.Generator, nu: int, tau: int, size: int) -> np.ndarray:
    if nu < tau:
        raise ValueError(f"sequence of {nu + 1} frames is shorter than the window ({tau + 1})")
    return rng.integers(0, nu - tau + 1, size=size)


def loss_ae(P: Mapping[str, Var], cfg: ModelConfig, seqs: np.ndarray, index: np.ndarray,
            S: Var | None = None) -> Var:
    """Decode ``E_T(V_tau(t0 + i))`` with the ``t0``-window ``S`` against ``v_{t0+i}``.

    ``seqs`` is ``(B, nu + 1, m)``; ``index`` holds one ``i`` per sequence.
    """
    B, n, _ = seqs.shape
    if n < cfg.tau + 1:
        raise ValueError("sequence shorter than the conditioning window")
    g = next(iter(P.values())).graph
    if cfg.use_static and S is None:
        S = encode_static(P, cfg, g.const(flatten_windows(seqs, 0, cfg.tau)))
    windows = np.stack([seqs[b, i:i + cfg.tau + 1].reshape(-1) for b, i in enumerate(index)])
    targets = np.stack([seqs[b, i] for b, i in enumerate(index)])
    T = encode_dynamic(P, cfg, g.const(windows))
    out = decode(P, cfg, combine(S, T, cfg.combination))
    return ad.mean(ad.square(out - g.const(targets)))


def loss_reg_s(P: Mapping[str, Var], cfg: ModelConfig, seqs: np.ndarray, S: Var | None = None) -> Var:
    n = seqs.shape[1]
    if n < cfg.tau + 1:
        raise ValueError("sequence shorter than the conditioning window")
    g = next(iter(P.values())).graph
    if S is None:
        S = encode_static(P, cfg, g.const(flatten_windows(seqs, 0, cfg.tau)))
    S_end = encode_static(P, cfg, g.const(flatten_windows(seqs, n - 1 - cfg.tau, cfg.tau)))
    return ad.mean(ad.square(S - S_end))


def loss_reg_t(P: Mapping[str, Var], cfg: ModelConfig, window: Var | None = None, T0: Var | None = None) -> Var:
    if T0 is None:
        T0 = encode_dynamic(P, cfg, window)
    return ad.mean(ad.square(T0))


def total_loss(P: Mapping[str, Var], cfg: ModelConfig, seqs: np.ndarray, weights: LossWeights,
               ae_index: np.ndarray) -> tuple[Var, dict[str, float]]:
    """Weighted objective on a batch of ``(B, nu + 1, m)`` chunks.

    Without a static code the two regularizers are dropped.
    """
    if seqs.shape[0] == 0:
        raise ValueError("empty batch")
    B, n, m = seqs.shape
    g = next(iter(P.values())).graph
    win0 = g.const(flatten_windows(seqs, 0, cfg.tau))
    S = encode_static(P, cfg, win0) if cfg.use_static else None
    T0 = encode_dynamic(P, cfg, win0)
    traj = integrate_latent(P, cfg, T0, n - 1)
    pred = ad.concat([decode(P, cfg, combine(S, T, cfg.combination)) for T in traj], axis=-1)
    terms = {"loss_pred": loss_pred(pred, g.const(seqs.reshape(B, -1))),
             "loss_ae": loss_ae(P, cfg, seqs, ae_index, S)}
    coef = {"loss_pred": weights.pred, "loss_ae": weights.ae}
    if cfg.use_static:
        terms["loss_reg_s"] = loss_reg_s(P, cfg, seqs, S)
        terms["loss_reg_t"] = loss_reg_t(P, cfg, T0=T0)
        coef.update(loss_reg_s=weights.reg_s, loss_reg_t=weights.reg_t)
    total = None
    for k, v in terms.items():
        part = ad.scale(v, coef[k])
        total = part if total is None else total + part
    report = {k: float(terms[k].value) if k in terms else 0.0 for k in TERMS}
    report["loss_total"] = float(total.value)
    return total, report


# ---------------------------------------------------------------------------
# Adam


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray], **hyper) -> "OptimizerState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, **hyper)


def adam_step(state: OptimizerState, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              lr: float | None = None) -> tuple[dict[str, np.ndarray], OptimizerState]:
    lr = state.lr if lr is None else lr
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter has {p.shape}")
        m = b1 * state.m[k] + (1 - b1) * g
        v = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[k], new_v[k] = m, v
    return new_p, OptimizerState(new_m, new_v, t, state.lr, b1, b2, state.eps)


# ---------------------------------------------------------------------------
# training loop


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 128
    epochs: int = 250
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    lr_schedule: tuple[tuple[int, float], ...] = ()
    seed: int = 0
    nu: int = 24
    tau: int = 4
    chunks_per_epoch: int = 0          # 0: as many as there are distinct chunks

    def __post_init__(self):
        if self.nu < self.tau:
            raise ValueError("nu must be >= tau")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")

    def lr_at(self, epoch: int) -> float:
        lr = self.lr
        for e, mult in self.lr_schedule:
            if epoch >= e:
                lr *= mult
        return lr


def sample_chunks(rng: np.random.Generator, n_seq: int, n_frames: int, length: int, count: int) -> np.ndarray:
    """``count`` (sequence, start) pairs drawn uniformly."""
    n_start = n_frames - length + 1
    if n_start < 1:
        raise ValueError(f"sequences of {n_frames} frames cannot hold chunks of {length}")
    flat = rng.integers(0, n_seq * n_start, size=count)
    return np.stack([flat // n_start, flat % n_start], axis=1)


def loss_and_grads(params: Mapping[str, np.ndarray], cfg: ModelConfig, seqs: np.ndarray,
                   weights: LossWeights, ae_index: np.ndarray) -> tuple[dict[str, float], dict[str, np.ndarray]]:
    g = Graph()
    P = g.inputs_from(params)
    total, report = total_loss(P, cfg, seqs, weights, ae_index)
    g.set_outputs(total)
    return report, ad.gradients(g)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    state: OptimizerState
    epoch: int
    log: list[dict[str, float]] = field(default_factory=list)


def train(model_cfg: ModelConfig, cfg: TrainConfig, weights: LossWeights, frames: np.ndarray,
          params: dict[str, np.ndarray], state: OptimizerState | None = None, start_epoch: int = 0,
          on_epoch: Callable[[int, TrainResult], None] | None = None) -> TrainResult:
    """Run epochs ``start_epoch .. cfg.epochs - 1`` on ``frames`` (N, n, m).

    Every epoch draws its chunks from a generator seeded by ``(seed, epoch)``
    so that resuming from a checkpoint reproduces an uninterrupted run.
    """
    if frames.ndim != 3 or frames.shape[2] != model_cfg.m:
        raise ValueError(f"training frames {frames.shape} do not match observation size m={model_cfg.m}")
    if cfg.tau != model_cfg.tau:
        raise ValueError("train and model configs disagree on tau")
    n_seq, n_frames, _ = frames.shape
    length = cfg.nu + 1
    if state is None:
        state = OptimizerState.zeros_like(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    per_epoch = cfg.chunks_per_epoch or n_seq * (n_frames - length + 1)
    result = TrainResult(params, state, start_epoch)
    for epoch in range(start_epoch, cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        chunks = sample_chunks(rng, n_seq, n_frames, length, per_epoch)
        lr = cfg.lr_at(epoch)
        sums = dict.fromkeys(("loss_total",) + TERMS, 0.0)
        for lo in range(0, per_epoch, cfg.batch):
            sel = chunks[lo:lo + cfg.batch]
            seqs = np.stack([frames[s, t:t + length] for s, t in sel])
            ae_index = sample_ae_index(rng, cfg.nu, cfg.tau, len(sel))
            report, grads = loss_and_grads(result.params, model_cfg, seqs, weights, ae_index)
            result.params, result.state = adam_step(result.state, result.params, grads, lr)
            for k in sums:
                sums[k] += report[k] * len(sel)
        row = {"epoch": epoch, "lr": lr, **{k: v / per_epoch for k, v in sums.items()}}
        result.log.append(row)
        result.epoch = epoch + 1
        log.info("epoch %d loss %.6g pred %.6g", epoch, row["loss_total"], row["loss_pred"])
        if on_epoch is not None:
            on_epoch(epoch, result)
    return result


METRICS_HEADER = ("epoch", "lr", "loss_total", "loss_pred", "loss_ae", "loss_reg_s", "loss_reg_t")


def format_metrics_row(row: Mapping[str, float]) -> str:
    return ",".join(str(row[k]) if k == "epoch" else repr(float(row[k])) for k in METRICS_HEADER)
