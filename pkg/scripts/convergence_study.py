"""Step-refinement tables for the wave solver and for latent flow round trips."""
import numpy as np

from varsep.evaluation import flow_roundtrip_check
from varsep.pde import WaveProblem, rk4_38_integrate, solve_wave
from varsep.verify import convergence_order, random_field


def wave_table(duration=0.02):
    prob = WaveProblem(c=350.0, f0=10.0)
    ref = solve_wave(prob, step=duration / 640, frame_dt=duration, duration=duration)[-1]
    steps = [duration / n for n in (20, 40, 80, 160)]
    errs = [np.max(np.abs(solve_wave(prob, step=h, frame_dt=duration, duration=duration)[-1] - ref)) for h in steps]
    print("wave equation, max |w - w_ref| at t = %g" % duration)
    for h, e in zip(steps, errs):
        print(f"  step {h:.3e}  error {e:.3e}")
    print(f"  fitted order {convergence_order(steps, errs):.2f}")


def flow_table(p=8, seed=0):
    rng = np.random.default_rng(seed)
    f = random_field(rng, p)
    T0 = rng.standard_normal((4, p))
    steps = (0.4, 0.2, 0.1, 0.05, 0.025)
    ref = rk4_38_integrate(lambda t, y: f(y), T0, 0.0, 1.0, steps[-1] / 8, record=False)[1][0]
    one_way, rt = [], []
    print(f"residual-MLP field, p={p}")
    for h in steps:
        one_way.append(np.max(np.abs(rk4_38_integrate(lambda t, y: f(y), T0, 0.0, 1.0, h, record=False)[1][0] - ref)))
        rt.append(flow_roundtrip_check(f, T0, 1.0, h))
        print(f"  step {h:<6}  one-way {one_way[-1]:.3e}  round trip {rt[-1]:.3e}")
    print(f"  fitted order: one-way {convergence_order(steps, one_way):.2f}, "
          f"round trip {convergence_order(steps, rt):.2f}")


if __name__ == "__main__":
    wave_table()
    flow_table()
