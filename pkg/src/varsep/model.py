"""Static/dynamic latent forecaster.

A conditioning window of ``tau + 1`` frames is flattened and encoded twice:
``E_S`` gives the time-invariant code ``S`` (extent ``d``), ``E_T`` the
initial dynamic state ``T_t0`` (extent ``p``). ``T`` is advanced by the
learned autonomous dynamics, one step per observation, and every state is
decoded together with ``S``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Var
from .nets import (DynamicsSpec, GruSpec, MlpSpec, gru_step, init_gru, init_mlp_normal,
                   init_residual, mlp_apply, residual_step)

COMBINATIONS = ("concat", "product")


@dataclass(frozen=True)
class ModelConfig:
    m: int
    d: int = 32
    p: int = 32
    tau: int = 4
    combination: str = "product"
    use_static: bool = True
    enc_hidden: tuple[int, ...] = (1200, 1200)
    dec_hidden: tuple[int, ...] = (1200, 1200, 1200)
    dynamics: str = "resnet"        # "resnet" | "gru"
    K: int = 3
    H: int = 512
    gain: float = 0.71
    init_std: float = 0.02

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.combination not in COMBINATIONS:
            raise ValueError(f"combination must be one of {COMBINATIONS}")
        if self.use_static and self.combination == "product" and self.d != self.p:
            raise ValueError(f"product combination needs d == p, got d={self.d}, p={self.p}")
        if self.dynamics not in ("resnet", "gru"):
            raise ValueError(f"unknown dynamics {self.dynamics!r}")

    @property
    def window_width(self) -> int:
        return (self.tau + 1) * self.m

    @property
    def z_dim(self) -> int:
        if not self.use_static:
            return self.p
        return self.d + self.p if self.combination == "concat" else self.p

    @property
    def enc_s(self) -> MlpSpec:
        return MlpSpec((self.window_width, *self.enc_hidden, self.d))

    @property
    def enc_t(self) -> MlpSpec:
        return MlpSpec((self.window_width, *self.enc_hidden, self.p))

    @property
    def dec(self) -> MlpSpec:
        return MlpSpec((self.z_dim, *self.dec_hidden, self.m), out_activation="sigmoid")

    @property
    def dyn(self) -> DynamicsSpec | GruSpec:
        if self.dynamics == "gru":
            return GruSpec(self.p, self.gain)
        return DynamicsSpec(self.K, self.H, self.p, self.gain)

    def without_static(self) -> "ModelConfig":
        """Ablation with ``S`` removed; ``T`` grows to ``d + p``."""
        if not self.use_static:
            return self
        return replace(self, use_static=False, p=self.p + self.d)


@dataclass
class LatentPair:
    S: np.ndarray | None
    T_traj: np.ndarray          # (steps, [batch,] p)


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    if cfg.use_static:
        params.update(init_mlp_normal(cfg.enc_s, rng, "enc_s", cfg.init_std))
    params.update(init_mlp_normal(cfg.enc_t, rng, "enc_t", cfg.init_std))
    if cfg.dynamics == "gru":
        params.update(init_gru(cfg.dyn, rng))
    else:
        params.update(init_residual(cfg.dyn, rng))
    params.update(init_mlp_normal(cfg.dec, rng, "dec", cfg.init_std))
    return params


def _check_window(cfg: ModelConfig, window: Var):
    if window.shape[-1] != cfg.window_width:
        raise ValueError(f"window has extent {window.shape[-1]}, expected (tau+1)*m = {cfg.window_width}")


def encode_static(P: Mapping[str, Var], cfg: ModelConfig, window: Var) -> Var:
    if not cfg.use_static:
        raise ValueError("model has no static encoder")
    _check_window(cfg, window)
    return mlp_apply(cfg.enc_s, P, window, "enc_s")


def encode_dynamic(P: Mapping[str, Var], cfg: ModelConfig, window: Var) -> Var:
    _check_window(cfg, window)
    return mlp_apply(cfg.enc_t, P, window, "enc_t")


def step_latent(P: Mapping[str, Var], cfg: ModelConfig, T: Var) -> Var:
    if cfg.dynamics == "gru":
        return gru_step(cfg.dyn, P, T)
    return residual_step(cfg.dyn, P, T)


def integrate_latent(P: Mapping[str, Var], cfg: ModelConfig, T0: Var, n_steps: int) -> list[Var]:
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    traj = [T0]
    for _ in range(n_steps):
        traj.append(step_latent(P, cfg, traj[-1]))
    return traj


def combine(S: Var | None, T: Var, mode: str) -> Var:
    if S is None:
        return T
    if mode == "concat":
        return ad.concat([S, T], axis=-1)
    if mode == "product":
        if S.shape != T.shape:
            raise ValueError(f"product combination needs equal extents, got {S.shape} and {T.shape}")
        return S * T
    raise ValueError(f"unknown combination {mode!r}")


def decode(P: Mapping[str, Var], cfg: ModelConfig, z: Var) -> Var:
    return mlp_apply(cfg.dec, P, z, "dec")


def forecast(P: Mapping[str, Var], cfg: ModelConfig, window: Var, horizon: int,
             static_window: Var | None = None) -> tuple[list[Var], Var | None, list[Var]]:
    """Decoded frames for ``t0 .. t0 + horizon``.

    ``static_window`` (default: ``window``) feeds ``E_S``; passing another
    sequence's window there is a content swap.

    Returns ``(frames, S, T_traj)``.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    S = encode_static(P, cfg, window if static_window is None else static_window) if cfg.use_static else None
    traj = integrate_latent(P, cfg, encode_dynamic(P, cfg, window), horizon)
    frames = [decode(P, cfg, combine(S, T, cfg.combination)) for T in traj]
    return frames, S, traj


# ---------------------------------------------------------------------------
# array-level helpers


def flatten_windows(frames: np.ndarray, start: int, tau: int) -> np.ndarray:
    """``V_tau(start)`` flattened per sequence; ``frames`` is (B, n, m...)."""
    w = frames[:, start:start + tau + 1]
    if w.shape[1] != tau + 1:
        raise ValueError(f"window starting at {start} needs {tau + 1} frames, sequence has {frames.shape[1]}")
    return w.reshape(w.shape[0], -1)


def predict(params: Mapping[str, np.ndarray], cfg: ModelConfig, windows: np.ndarray, horizon: int,
            static_windows: np.ndarray | None = None) -> tuple[np.ndarray, LatentPair]:
    """Forecast from a batch of flattened windows ``(B, (tau+1)*m)``.

    Returns frames ``(B, horizon + 1, m)`` and the latent codes.
    """
    g = Graph()
    P = g.inputs_from(params)
    sw = None if static_windows is None else g.const(static_windows)
    frames, S, traj = forecast(P, cfg, g.const(windows), horizon, sw)
    out = np.stack([f.value for f in frames], axis=1)
    latents = LatentPair(None if S is None else S.value, np.stack([t.value for t in traj]))
    return out, latents
