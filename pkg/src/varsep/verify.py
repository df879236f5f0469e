"""Numerical self-checks run by ``varsep verify``.

Every suite returns a list of :class:`Check` records carrying the measured
value next to the tolerance it is compared against.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .evaluation import flow_roundtrip_check, regularizer_bound_check
from .nets import MlpSpec, init_mlp_normal, mlp_numpy
from .pde import (AdvectionProblem, HeatProblem, WaveProblem, advection_reduction_check, heat_residual,
                  heat_separable_solution, heat_superposition, rk4_38_integrate, solve_wave)


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    relation: str = "<"

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        close = "]" if self.relation.startswith("in") else ""
        return f"{status} {self.name}: {self.value:.6g} {self.relation} {self.tol:.6g}{close}"


def _below(name, value, tol) -> Check:
    return Check(name, float(value), tol, bool(value < tol))


def _within(name, value, lo, hi) -> Check:
    return Check(name, float(value), hi, bool(lo <= value <= hi), relation=f"in [{lo:g},")


def convergence_order(steps, errors) -> float:
    """Least-squares slope of log(error) against log(step)."""
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


# ---------------------------------------------------------------------------


def heat_checks() -> list[Check]:
    prob = HeatProblem()
    x = np.linspace(0.0, prob.L, 41)[1:-1]
    t = np.linspace(0.05, 2.0, 20)
    out = []
    for n in (1, 2, 3):
        u = lambda X, T, n=n: heat_separable_solution(prob.L, prob.c, n, 1.0, X, T)  # noqa: E731
        out.append(_below(f"heat separable n={n} residual", np.max(np.abs(heat_residual(u, prob.c, x, t))), 1e-5))
    out.append(_below("heat superposition residual", np.max(np.abs(heat_residual(prob, prob.c, x, t))), 1e-5))
    edge = heat_superposition(prob.L, prob.c, prob.B, np.array([0.0, prob.L])[:, None], t[None, :])
    out.append(Check("heat boundary max |u|", float(np.max(np.abs(edge))), 0.0, bool(np.all(edge == 0.0)), "=="))
    return out


def advection_checks() -> list[Check]:
    out = []
    for c, chi in ((1.0, 0.5), (-0.7, 0.3), (0.25, 1.5)):
        # exact rational arithmetic; floats would leave rounding residue
        c1, c2 = AdvectionProblem(Fraction(c), Fraction(chi)).constraints()
        out.append(Check(f"advection c={c} chi={chi} constraints", float(max(abs(c1), abs(c2))), 0.0,
                         c1 == 0 and c2 == 0, "=="))
        prob = AdvectionProblem(c, chi)
        L = 2.0
        v = lambda X, T, chi=chi: heat_superposition(L, np.sqrt(chi), (1.0, 0.3), X, T)  # noqa: E731
        x = np.linspace(0.0, L, 33)[1:-1]
        t = np.linspace(0.05, 1.0, 12)
        out.append(_below(f"advection c={c} chi={chi} residual", advection_reduction_check(prob, v, x, t), 1e-4))
    return out


WAVE_STEPS = (5e-4, 2.5e-4, 1.25e-4)
WAVE_REF_STEP = 3.125e-5


def wave_checks(duration: float = 0.02) -> list[Check]:
    prob = WaveProblem(c=350.0, f0=10.0)
    kw = dict(frame_dt=duration, duration=duration)
    ref = solve_wave(prob, step=WAVE_REF_STEP, **kw)[-1]
    errs = [np.max(np.abs(solve_wave(prob, step=h, **kw)[-1] - ref)) for h in WAVE_STEPS]
    out = [_within("wave rk4_38 convergence order", convergence_order(WAVE_STEPS, errs), 3.5, 4.5)]
    zero = solve_wave(WaveProblem(f0=0.0), duration=0.02)
    out.append(Check("wave zero source max |w|", float(np.max(np.abs(zero))), 0.0, bool(np.all(zero == 0.0)), "=="))
    return out


def bound_checks(n_draws: int = 50, partition: int | None = None, seed: int = 0) -> list[Check]:
    """Draws random encoders, sequences and partitions; ``partition`` fixes the interval count."""
    out = []
    worst = np.inf
    for k in range(n_draws):
        rng = np.random.default_rng([seed, k])
        d = (1, 2, 4)[k % 3] if k < 3 else int(rng.integers(1, 9))
        m, tau, n = int(rng.integers(2, 7)), int(rng.integers(0, 4)), int(rng.integers(8, 16))
        spec = MlpSpec(((tau + 1) * m, 16, d))
        params = init_mlp_normal(spec, rng, "e", std=0.5)
        seq = rng.random((n, m))
        n_int = partition or int(rng.integers(1, 6))
        t_max = n - 1 - tau
        part = np.sort(rng.uniform(0, t_max, n_int + 1))
        part[0], part[-1] = 0.0, t_max
        if np.any(np.diff(part) <= 1e-3):
            part = np.linspace(0.0, t_max, n_int + 1)
        res = regularizer_bound_check(lambda w: mlp_numpy(spec, params, w, "e"), seq, tau, part)
        worst = min(worst, res.lhs - res.rhs)
    out.append(Check(f"bound lhs - rhs over {n_draws} draws (min)", worst, -1e-6, bool(worst >= -1e-6), ">="))
    return out


FLOW_STEPS = (0.2, 0.1, 0.05)


def random_field(rng: np.random.Generator, p: int, hidden: int = 32, norm: float = 1.0):
    """Smooth residual-MLP vector field ``x -> x@A + tanh(x W1 + b1) W2``, spectral norms ~ ``norm``."""
    def scaled(shape):
        W = rng.standard_normal(shape)
        return norm * W / np.linalg.norm(W, 2)
    A, W1, W2 = scaled((p, p)), scaled((p, hidden)), scaled((hidden, p))
    b1 = 0.1 * rng.standard_normal(hidden)
    return lambda x: x @ A + np.tanh(x @ W1 + b1) @ W2


def flow_checks(n_fields: int = 5, seed: int = 0) -> list[Check]:
    """Round trip at step 1e-3 plus step-refinement slopes.

    The one-way error of the 3/8 rule falls like step^4. The round trip
    pairs the method with its own reversal, so the leading error terms
    cancel and it falls at least that fast (about step^5 in practice).
    """
    worst, one_way, round_trip = 0.0, [], []
    for k in range(n_fields):
        rng = np.random.default_rng([seed, k])
        p = (1, 2, 4, 8, 16)[k % 5]
        f = random_field(rng, p)
        T0 = rng.standard_normal((4, p))
        worst = max(worst, flow_roundtrip_check(f, T0, 1.0, 1e-3))
        round_trip.append(convergence_order(FLOW_STEPS, [flow_roundtrip_check(f, T0, 1.0, h) for h in FLOW_STEPS]))
        end = lambda h: rk4_38_integrate(lambda t, y: f(y), T0, 0.0, 1.0, h, record=False)[1][0]  # noqa: E731
        ref = end(FLOW_STEPS[-1] / 8)
        one_way.append(convergence_order(FLOW_STEPS, [np.max(np.abs(end(h) - ref)) for h in FLOW_STEPS]))
    return [_below("flow round-trip error at step 1e-3", worst, 1e-6),
            _within("flow one-way order (min over fields)", min(one_way), 3.5, 4.5),
            _within("flow one-way order (max over fields)", max(one_way), 3.5, 4.5),
            Check("flow round-trip order (min over fields)", min(round_trip), 3.5, min(round_trip) >= 3.5, ">=")]


SUITES = {"heat": heat_checks, "advection": advection_checks, "wave": wave_checks,
          "bound": bound_checks, "flow": flow_checks}


def run_suite(name: str, partition: int | None = None, seed: int = 0) -> list[Check]:
    if name == "all":
        return [c for s in SUITES for c in run_suite(s, partition, seed)]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)} or all")
    if name == "bound":
        return bound_checks(partition=partition, seed=seed)
    if name == "flow":
        return flow_checks(seed=seed)
    return SUITES[name]()
