"""MLPs, the residual-network integrator, a GRU cell and their initializers.

Parameters live in flat ``dict[str, ndarray]`` mappings keyed by dotted
names (``"dec.1.W"``); inside a graph the same keys map to :class:`Var`
handles. Weights are stored as ``(in, out)`` matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Var


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple[int, ...]
    out_activation: str = "none"   # "none" | "sigmoid"
    hidden_activation: str = "relu"

    def __post_init__(self):
        if len(self.widths) < 3:
            raise ValueError("an MLP needs at least one hidden layer")
        if min(self.widths) < 1:
            raise ValueError(f"all widths must be >= 1, got {self.widths}")
        if self.out_activation not in ("none", "sigmoid"):
            raise ValueError(f"unknown output activation {self.out_activation!r}")
        if self.hidden_activation not in ("relu", "tanh"):
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]


@dataclass(frozen=True)
class DynamicsSpec:
    K: int
    H: int
    p: int
    gain: float = 0.71

    def __post_init__(self):
        if self.K < 1 or self.H < 1 or self.p < 1:
            raise ValueError("K, H and p must all be >= 1")
        if self.gain <= 0:
            raise ValueError("gain must be positive")

    def block(self) -> MlpSpec:
        return MlpSpec((self.p, self.H, self.H, self.p))


@dataclass(frozen=True)
class GruSpec:
    p: int
    gain: float = 1.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")


# ---------------------------------------------------------------------------
# initializers


def init_orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian draw orthonormalized along its smaller side, times ``gain``.

    For ``rows <= cols`` the rows are orthonormal (``W @ W.T = gain**2 I``),
    otherwise the columns are.
    """
    if rows < 1 or cols < 1:
        raise ValueError("matrix extents must be >= 1")
    if gain <= 0:
        raise ValueError("gain must be positive")
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    # sign fix makes the result uniformly distributed (Haar)
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    if rows < cols:
        q = q.T
    return gain * q


def init_mlp_normal(spec: MlpSpec, rng: np.random.Generator, prefix: str,
                    std: float = 0.02) -> dict[str, np.ndarray]:
    params = {}
    for i, (n_in, n_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        params[f"{prefix}.{i}.W"] = std * rng.standard_normal((n_in, n_out))
        params[f"{prefix}.{i}.b"] = np.zeros(n_out)
    return params


def init_mlp_orthogonal(spec: MlpSpec, rng: np.random.Generator, prefix: str,
                        gain: float) -> dict[str, np.ndarray]:
    params = {}
    for i, (n_in, n_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        params[f"{prefix}.{i}.W"] = init_orthogonal(n_in, n_out, gain, rng)
        params[f"{prefix}.{i}.b"] = np.zeros(n_out)
    return params


def init_residual(spec: DynamicsSpec, rng: np.random.Generator, prefix: str = "dyn") -> dict[str, np.ndarray]:
    params = {}
    for k in range(spec.K):
        params.update(init_mlp_orthogonal(spec.block(), rng, f"{prefix}.{k}", spec.gain))
    return params


GRU_GATES = ("r", "z", "n")


def init_gru(spec: GruSpec, rng: np.random.Generator, prefix: str = "gru") -> dict[str, np.ndarray]:
    params = {}
    for gate in GRU_GATES:
        params[f"{prefix}.W{gate}"] = init_orthogonal(spec.p, spec.p, spec.gain, rng)
        params[f"{prefix}.U{gate}"] = init_orthogonal(spec.p, spec.p, spec.gain, rng)
        params[f"{prefix}.b{gate}"] = np.zeros(spec.p)
    params[f"{prefix}.bhn"] = np.zeros(spec.p)
    return params


# ---------------------------------------------------------------------------
# forward passes


def _act(x: Var, kind: str) -> Var:
    return ad.relu(x) if kind == "relu" else ad.tanh(x)


def mlp_apply(spec: MlpSpec, params: Mapping[str, Var], x: Var, prefix: str) -> Var:
    if x.shape[-1] != spec.n_in:
        raise ad.DimensionError(x.id, "mlp", f"input extent {x.shape[-1]} != {spec.n_in}")
    n_layers = len(spec.widths) - 1
    for i in range(n_layers):
        x = ad.affine(x, params[f"{prefix}.{i}.W"], params[f"{prefix}.{i}.b"])
        if i < n_layers - 1:
            x = _act(x, spec.hidden_activation)
    if spec.out_activation == "sigmoid":
        x = ad.sigmoid(x)
    return x


def residual_step(spec: DynamicsSpec, params: Mapping[str, Var], T: Var, prefix: str = "dyn") -> Var:
    """One observation step: ``x <- x + g_k(x)`` for each of the K blocks."""
    if T.shape[-1] != spec.p:
        raise ad.DimensionError(T.id, "residual", f"state extent {T.shape[-1]} != {spec.p}")
    block = spec.block()
    for k in range(spec.K):
        T = T + mlp_apply(block, params, T, f"{prefix}.{k}")
    return T


def gru_step(spec: GruSpec, params: Mapping[str, Var], h: Var, prefix: str = "gru") -> Var:
    """Autonomous GRU update: the previous state is also the input."""
    if h.shape[-1] != spec.p:
        raise ad.DimensionError(h.id, "gru", f"state extent {h.shape[-1]} != {spec.p}")
    P = lambda k: params[f"{prefix}.{k}"]  # noqa: E731
    r = ad.sigmoid(ad.affine(h, P("Wr"), P("br")) + h @ P("Ur"))
    z = ad.sigmoid(ad.affine(h, P("Wz"), P("bz")) + h @ P("Uz"))
    n = ad.tanh(ad.affine(h, P("Wn"), P("bn")) + r * ad.affine(h, P("Un"), P("bhn")))
    return ad.scale(z, -1.0, 1.0) * n + z * h


def lipschitz_bound(spec: DynamicsSpec, params: Mapping[str, np.ndarray], prefix: str = "dyn") -> float:
    """Upper bound on the Lipschitz constant of :func:`residual_step`."""
    L = 1.0
    for k in range(spec.K):
        lk = 1.0
        for i in range(3):
            lk *= np.linalg.norm(params[f"{prefix}.{k}.{i}.W"], 2)
        L *= 1.0 + lk
    return float(L)


def mlp_numpy(spec: MlpSpec, params: Mapping[str, np.ndarray], x: np.ndarray, prefix: str) -> np.ndarray:
    """Graph-free forward pass, for callers that need no gradients."""
    n_layers = len(spec.widths) - 1
    for i in range(n_layers):
        x = x @ params[f"{prefix}.{i}.W"] + params[f"{prefix}.{i}.b"]
        if i < n_layers - 1:
            x = np.maximum(x, 0.0) if spec.hidden_activation == "relu" else np.tanh(x)
    if spec.out_activation == "sigmoid":
        x = 1.0 / (1.0 + np.exp(-x))
    return x
