import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from varsep import autodiff as ad
from varsep.autodiff import DimensionError, Graph
from varsep.nets import (DynamicsSpec, GruSpec, MlpSpec, gru_step, init_gru, init_mlp_normal, init_orthogonal,
                         init_residual, lipschitz_bound, mlp_apply, mlp_numpy, residual_step)


@given(st.integers(1, 12), st.integers(1, 12), st.floats(0.1, 3.0), st.integers(0, 2**32 - 1))
def test_orthogonal_init_is_orthogonal_on_small_side(rows, cols, gain, seed):
    W = init_orthogonal(rows, cols, gain, np.random.default_rng(seed))
    assert W.shape == (rows, cols)
    gram = W @ W.T if rows <= cols else W.T @ W
    np.testing.assert_allclose(gram, gain ** 2 * np.eye(min(rows, cols)), atol=1e-10)


def test_normal_init_statistics():
    spec = MlpSpec((300, 400, 5))
    P = init_mlp_normal(spec, np.random.default_rng(0), "e", std=0.02)
    assert abs(P["e.0.W"].std() - 0.02) < 5e-4
    assert not P["e.0.b"].any() and not P["e.1.b"].any()


def test_mlp_spec_requires_hidden_layer():
    with pytest.raises(ValueError):
        MlpSpec((3, 4))


def test_mlp_graph_matches_numpy(rng):
    spec = MlpSpec((6, 8, 8, 3), out_activation="sigmoid")
    P = init_mlp_normal(spec, rng, "d", std=0.5)
    x = rng.normal(size=(5, 6))
    g = Graph()
    out = mlp_apply(spec, g.inputs_from(P), g.const(x), "d")
    np.testing.assert_allclose(out.value, mlp_numpy(spec, P, x, "d"), rtol=1e-12)
    assert np.all((out.value > 0) & (out.value < 1))


def test_mlp_rejects_wrong_width(rng):
    spec = MlpSpec((6, 8, 3))
    g = Graph()
    P = g.inputs_from(init_mlp_normal(spec, rng, "d"))
    with pytest.raises(DimensionError):
        mlp_apply(spec, P, g.const(np.ones((2, 5))), "d")


def test_residual_step_adds_blocks(rng):
    spec = DynamicsSpec(K=2, H=6, p=4, gain=0.5)
    P = init_residual(spec, rng)
    T = rng.normal(size=(3, 4))
    g = Graph()
    out = residual_step(spec, g.inputs_from(P), g.const(T)).value
    x = T
    for k in range(2):
        x = x + mlp_numpy(spec.block(), P, x, f"dyn.{k}")
    np.testing.assert_allclose(out, x, rtol=1e-12)


def test_residual_lipschitz_bound_holds(rng):
    spec = DynamicsSpec(K=3, H=16, p=5, gain=0.71)
    P = init_residual(spec, rng)
    L = lipschitz_bound(spec, P)
    for _ in range(20):
        a, b = rng.normal(size=5), rng.normal(size=5)
        fa = _step_numpy(spec, P, a)
        fb = _step_numpy(spec, P, b)
        assert np.linalg.norm(fa - fb) <= L * np.linalg.norm(a - b) + 1e-12


def _step_numpy(spec, P, x):
    for k in range(spec.K):
        x = x + mlp_numpy(spec.block(), P, x, f"dyn.{k}")
    return x


def test_dynamics_grad_check(rng):
    spec = DynamicsSpec(K=2, H=5, p=3, gain=0.9)
    g = Graph()
    P = g.inputs_from(init_residual(spec, rng))
    T = g.input("T", rng.normal(size=(2, 3)))
    g.set_outputs(ad.mean(ad.square(residual_step(spec, P, T))))
    assert ad.grad_check(g).passed


def test_gru_step_grad_check_and_bounds(rng):
    spec = GruSpec(p=4)
    g = Graph()
    P = g.inputs_from(init_gru(spec, rng))
    h = g.input("h", rng.uniform(-1, 1, size=(3, 4)))
    out = gru_step(spec, P, h)
    # convex combination of tanh output and a state in [-1, 1]
    assert np.all(np.abs(out.value) <= 1.0)
    g.set_outputs(ad.mean(ad.square(out)))
    assert ad.grad_check(g).passed
