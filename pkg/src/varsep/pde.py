"""Analytic heat solutions, the advection change of variables, and the
finite-difference / Runge-Kutta machinery behind the wave data."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class SolverError(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# heat equation u_t = c^2 u_xx on [0, L], u(0, t) = u(L, t) = 0


@dataclass(frozen=True)
class HeatProblem:
    L: float = 2.0
    c: float = 0.5
    B: tuple[float, ...] = (1.0, 0.5, 0.25)

    def __post_init__(self):
        if self.L <= 0 or self.c <= 0:
            raise ValueError("L and c must be positive")

    def __call__(self, x, t):
        return heat_superposition(self.L, self.c, self.B, x, t)


def heat_separable_solution(L: float, c: float, n: int, B: float, x, t):
    if L <= 0:
        raise ValueError("L must be positive")
    x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
    k = n * np.pi / L
    return B * np.sin(k * x) * np.exp(-(c * k) ** 2 * t)


def heat_superposition(L: float, c: float, B: Sequence[float], x, t):
    """``sum_n B[n-1] sin(n pi x / L) exp(-(c n pi / L)^2 t)`` for n = 1..N."""
    x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
    u = np.zeros(np.broadcast(x, t).shape)
    for n, b in enumerate(B, start=1):
        if b != 0:
            u = u + heat_separable_solution(L, c, n, b, x, t)
    # sin(n pi) is not exactly zero in floating point
    if np.ndim(x) == 0:
        return u if 0 < x < L else np.zeros_like(u)
    return np.where((x == 0) | (x == L), 0.0, u)


def sine_coefficients(f: Callable[[np.ndarray], np.ndarray], L: float, n_terms: int,
                      n_quad: int = 4001) -> np.ndarray:
    """Fourier sine coefficients of ``f`` on [0, L] by composite Simpson quadrature."""
    from scipy.integrate import simpson
    x = np.linspace(0.0, L, n_quad)
    fx = f(x)
    return np.array([2.0 / L * simpson(fx * np.sin(n * np.pi * x / L), x=x) for n in range(1, n_terms + 1)])


def heat_residual(u: Callable, c: float, x: np.ndarray, t: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """``u_t - c^2 u_xx`` by central differences at every (x, t) pair."""
    x, t = np.meshgrid(x, t, indexing="ij")
    u_t = (u(x, t + h) - u(x, t - h)) / (2 * h)
    u_xx = (u(x + h, t) - 2 * u(x, t) + u(x - h, t)) / h ** 2
    return u_t - c ** 2 * u_xx


# ---------------------------------------------------------------------------
# heat equation with advection: u_t + c u_x = chi u_xx


@dataclass(frozen=True)
class AdvectionProblem:
    c: float
    chi: float

    def __post_init__(self):
        if self.chi <= 0:
            raise ValueError("chi must be positive")

    @property
    def alpha(self) -> float:
        return self.c / (2 * self.chi)

    @property
    def beta(self) -> float:
        return self.alpha ** 2 * self.chi - self.c * self.alpha

    def constraints(self) -> tuple[float, float]:
        """The two coefficients the change of variables must cancel."""
        a, b = self.alpha, self.beta
        return b + self.c * a - a * a * self.chi, self.c - 2 * a * self.chi

    def lift(self, v: Callable) -> Callable:
        """``u(x, t) = v(x, t) exp(alpha x + beta t)``."""
        a, b = self.alpha, self.beta
        return lambda x, t: v(x, t) * np.exp(a * x + b * t)


def advection_reduction_check(problem: AdvectionProblem, v: Callable, x: np.ndarray, t: np.ndarray,
                              h: float = 1e-4) -> float:
    """Max ``|u_t + c u_x - chi u_xx|`` over the grid for ``u = lift(v)``.

    ``v`` must solve ``v_t = chi v_xx``.
    """
    u = problem.lift(v)
    X, T = np.meshgrid(x, t, indexing="ij")
    u_t = (u(X, T + h) - u(X, T - h)) / (2 * h)
    u_x = (u(X + h, T) - u(X - h, T)) / (2 * h)
    u_xx = (u(X + h, T) - 2 * u(X, T) + u(X - h, T)) / h ** 2
    return float(np.max(np.abs(u_t + problem.c * u_x - problem.chi * u_xx)))


# ---------------------------------------------------------------------------
# Laplacian


CENTERED = np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])
# second derivative at the first and second node from five one-sided points
EDGE0 = np.array([35 / 12, -26 / 3, 19 / 2, -14 / 3, 11 / 12])
EDGE1 = np.array([11 / 12, -5 / 3, 1 / 2, 1 / 3, -1 / 12])


def _second_derivative(f: np.ndarray, axis: int, spacing: float, boundary: str) -> np.ndarray:
    f = np.moveaxis(f, axis, 0)
    n = f.shape[0]
    out = np.empty_like(f)
    if boundary == "neumann":
        # even reflection about the end nodes: f[-k] = f[k]
        g = np.concatenate([f[2:0:-1], f, f[-2:-4:-1]], axis=0)
        out[:] = sum(c * g[k:k + n] for k, c in enumerate(CENTERED))
    else:
        out[2:n - 2] = sum(c * f[k:k + n - 4] for k, c in enumerate(CENTERED))
        out[0] = np.tensordot(EDGE0, f[:5], axes=1)
        out[1] = np.tensordot(EDGE1, f[:5], axes=1)
        out[n - 1] = np.tensordot(EDGE0, f[n - 1:n - 6:-1], axes=1)
        out[n - 2] = np.tensordot(EDGE1, f[n - 1:n - 6:-1], axes=1)
    return np.moveaxis(out, 0, axis) / spacing ** 2


def laplacian_stencil(field: np.ndarray, spacing: float = 1.0, boundary: str = "one-sided") -> np.ndarray:
    """Five-point-per-axis Laplacian, fourth-order accurate in the interior.

    ``boundary="one-sided"`` evaluates the two outer rows with one-sided
    five-point stencils; ``"neumann"`` mirrors the field across each end node
    (zero normal derivative).
    """
    field = np.asarray(field, dtype=np.float64)
    if min(field.shape) < 5:
        raise ValueError(f"field {field.shape} needs at least 5 points per axis")
    if boundary not in ("one-sided", "neumann"):
        raise ValueError(f"unknown boundary treatment {boundary!r}")
    return sum(_second_derivative(field, ax, spacing, boundary) for ax in range(field.ndim))


# ---------------------------------------------------------------------------
# Runge-Kutta 3/8 rule


def rk4_38_step(rhs: Callable, y, t: float, h: float):
    k1 = rhs(t, y)
    k2 = rhs(t + h / 3, y + h * k1 / 3)
    k3 = rhs(t + 2 * h / 3, y + h * (k2 - k1 / 3))
    k4 = rhs(t + h, y + h * (k1 - k2 + k3))
    return y + h * (k1 + 3 * k2 + 3 * k3 + k4) / 8


def rk4_38_integrate(rhs: Callable, y0, t0: float, t1: float, step: float,
                     record: bool = True) -> tuple[np.ndarray, list]:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1``.

    Uses fixed steps of size ``step`` (negative when ``t1 < t0``) and
    shortens the last one to land on ``t1``. Returns the step times and the
    states (only the final state when ``record`` is False).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    span = t1 - t0
    direction = 1.0 if span >= 0 else -1.0
    n_full = int(np.floor(abs(span) / step + 1e-9))
    times = [t0 + direction * k * step for k in range(n_full + 1)]
    if abs(span) - n_full * step > 1e-12 * max(1.0, abs(span)):
        times.append(t1)
    else:
        times[-1] = t1
    y = np.array(y0, dtype=np.float64) if np.ndim(y0) else float(y0)
    states = [y]
    for ta, tb in zip(times[:-1], times[1:]):
        y = rk4_38_step(rhs, y, ta, tb - ta)
        if not np.all(np.isfinite(y)):
            raise SolverError(f"non-finite state at t={tb:.6g} (max |y| before step: "
                              f"{np.max(np.abs(states[-1])):.3g})")
        if record:
            states.append(y)
        else:
            states[0] = y
    return np.array(times if record else [t1]), states


# ---------------------------------------------------------------------------
# wave equation w_tt = c^2 lap(w) + f


@dataclass(frozen=True)
class WaveProblem:
    c: float = 350.0
    f0: float = 10.0
    T0: float = 0.05
    size: int = 64
    center: tuple[int, int] = (32, 32)
    radius: float = 5.0
    step: float = 0.001
    frame_dt: float = 0.002
    duration: float = 0.298
    pins: tuple[tuple[int, int], ...] = ((0, 0), (32, 32))

    def __post_init__(self):
        if not 300 <= self.c <= 400:
            raise ValueError(f"celerity {self.c} outside [300, 400]")
        if not (1 <= self.f0 <= 30 or self.f0 == 0):
            raise ValueError(f"source amplitude {self.f0} outside [1, 30]")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration / self.frame_dt)) + 1

    def source_mask(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.size), np.arange(self.size), indexing="ij")
        return (i - self.center[0]) ** 2 + (j - self.center[1]) ** 2 <= self.radius ** 2

    def zero_state(self) -> np.ndarray:
        """Stacked ``(w, w_t)``, shape (2, size, size)."""
        return np.zeros((2, self.size, self.size))


def wave_rhs(problem: WaveProblem, state: np.ndarray, t: float, mask: np.ndarray | None = None) -> np.ndarray:
    """``(w, w_t) -> (w_t, c^2 lap(w) + source(t))`` with reflecting walls.

    Pinned nodes get zero time derivatives so they stay at their initial
    (zero) value through every Runge-Kutta stage.
    """
    w, wt = state
    if mask is None:
        mask = problem.source_mask()
    acc = problem.c ** 2 * laplacian_stencil(w, 1.0, boundary="neumann")
    acc = acc + np.where(mask, problem.f0 * np.exp(-t / problem.T0), 0.0)
    out = np.stack([wt.copy(), acc])
    for i, j in problem.pins:
        out[:, i, j] = 0.0
    return out


def solve_wave(problem: WaveProblem, step: float | None = None, frame_dt: float | None = None,
               duration: float | None = None) -> np.ndarray:
    """Sampled ``w`` frames at ``0, frame_dt, ..., duration``; shape (n, size, size)."""
    step = problem.step if step is None else step
    frame_dt = problem.frame_dt if frame_dt is None else frame_dt
    duration = problem.duration if duration is None else duration
    n = int(round(duration / frame_dt)) + 1
    mask = problem.source_mask()
    rhs = lambda t, y: wave_rhs(problem, y, t, mask)  # noqa: E731
    y = problem.zero_state()
    frames = [y[0].copy()]
    for k in range(1, n):
        _, (y,) = rk4_38_integrate(rhs, y, (k - 1) * frame_dt, k * frame_dt, step, record=False)
        frames.append(y[0].copy())
    return np.array(frames)
