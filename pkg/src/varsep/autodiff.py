"""Define-by-run reverse-mode differentiation over dense float64 arrays.

A :class:`Graph` records every operation as it is executed (the values are
computed eagerly), so the same object serves as a tape for backpropagation
and as a replayable program: :func:`evaluate` re-executes the recorded nodes
in order with new input bindings, which is what :func:`grad_check` relies on.

Tensors are plain row-major ``numpy.ndarray`` objects of dtype float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit


class DimensionError(ValueError):
    """Raised when a node receives inputs with incompatible shapes."""

    def __init__(self, node_id: int, kind: str, message: str):
        self.node_id = node_id
        self.kind = kind
        super().__init__(f"node {node_id} ({kind}): {message}")


class NumericError(FloatingPointError):
    """Raised when a node produces NaN or infinite entries."""

    def __init__(self, node_id: int, kind: str):
        self.node_id = node_id
        self.kind = kind
        super().__init__(f"node {node_id} ({kind}): non-finite result")


class ContractError(ValueError):
    pass


# ---------------------------------------------------------------------------
# operation table


def _check(cond: bool, msg: str):
    if not cond:
        raise _ShapeProblem(msg)


class _ShapeProblem(Exception):
    pass


def _bias_compatible(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape or (b.ndim < a.ndim and a.shape[a.ndim - b.ndim:] == b.shape)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.reshape((-1,) + shape).sum(axis=0)


def _affine_fwd(x, W, b):
    _check(W.ndim == 2, f"weight must be 2-D, got {W.shape}")
    _check(x.ndim in (1, 2) and x.shape[-1] == W.shape[0],
           f"input {x.shape} does not match weight {W.shape}")
    _check(b.shape == (W.shape[1],), f"bias {b.shape} does not match weight {W.shape}")
    return x @ W + b


def _affine_bwd(g, out, x, W, b):
    if x.ndim == 1:
        return g @ W.T, np.outer(x, g), g
    return g @ W.T, x.T @ g, g.sum(axis=0)


def _matmul_fwd(a, b):
    _check(a.ndim in (1, 2) and b.ndim == 2 and a.shape[-1] == b.shape[0],
           f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _matmul_bwd(g, out, a, b):
    if a.ndim == 1:
        return g @ b.T, np.outer(a, g)
    return g @ b.T, a.T @ g


def _add_fwd(a, b):
    _check(_bias_compatible(a, b), f"cannot add {a.shape} and {b.shape}")
    return a + b


def _sub_fwd(a, b):
    _check(_bias_compatible(a, b), f"cannot subtract {b.shape} from {a.shape}")
    return a - b


def _mul_fwd(a, b):
    _check(a.shape == b.shape, f"elementwise product needs equal shapes, got {a.shape} and {b.shape}")
    return a * b


def _concat_fwd(*xs, axis):
    nd = xs[0].ndim
    ax = axis % nd
    for x in xs:
        _check(x.ndim == nd and all(x.shape[i] == xs[0].shape[i] for i in range(nd) if i != ax),
               f"cannot concatenate shapes {[x.shape for x in xs]} along axis {axis}")
    return np.concatenate(xs, axis=ax)


def _concat_bwd(g, out, *xs, axis):
    ax = axis % g.ndim
    bounds = np.cumsum([x.shape[ax] for x in xs])[:-1]
    return tuple(np.split(g, bounds, axis=ax))


def _slice_fwd(x, start, stop, axis):
    ax = axis % x.ndim
    _check(0 <= start <= stop <= x.shape[ax], f"slice [{start}:{stop}] out of range for axis extent {x.shape[ax]}")
    idx = [slice(None)] * x.ndim
    idx[ax] = slice(start, stop)
    return x[tuple(idx)].copy()


def _slice_bwd(g, out, x, start, stop, axis):
    ax = axis % x.ndim
    full = np.zeros_like(x)
    idx = [slice(None)] * x.ndim
    idx[ax] = slice(start, stop)
    full[tuple(idx)] = g
    return (full,)


def _reduce_bwd(g, x, axis, scale):
    if axis is None:
        return (np.full_like(x, float(g) * scale),)
    return (np.broadcast_to(np.expand_dims(g, axis) * scale, x.shape).copy(),)


def _sum_fwd(x, axis):
    return np.asarray(x.sum(axis=axis), dtype=np.float64)


def _mean_fwd(x, axis):
    _check(x.size > 0, "mean of an empty tensor")
    return np.asarray(x.mean(axis=axis), dtype=np.float64)


def _mean_bwd(g, out, x, axis):
    n = x.size if axis is None else x.shape[axis]
    return _reduce_bwd(g, x, axis, 1.0 / n)


@dataclass(frozen=True)
class _Op:
    forward: Callable
    backward: Callable


OPS: dict[str, _Op] = {
    "affine": _Op(_affine_fwd, _affine_bwd),
    "matmul": _Op(_matmul_fwd, _matmul_bwd),
    "add": _Op(_add_fwd, lambda g, out, a, b: (g, _unbroadcast(g, b.shape))),
    "sub": _Op(_sub_fwd, lambda g, out, a, b: (g, -_unbroadcast(g, b.shape))),
    "mul": _Op(_mul_fwd, lambda g, out, a, b: (g * b, g * a)),
    # a*x + c with python-float constants
    "scale": _Op(lambda x, a, c: a * x + c, lambda g, out, x, a, c: (a * g,)),
    # relu'(0) is taken as 0
    "relu": _Op(lambda x: np.maximum(x, 0.0), lambda g, out, x: (g * (x > 0),)),
    "sigmoid": _Op(expit, lambda g, out, x: (g * out * (1.0 - out),)),
    "tanh": _Op(np.tanh, lambda g, out, x: (g * (1.0 - out * out),)),
    "exp": _Op(np.exp, lambda g, out, x: (g * out,)),
    "square": _Op(np.square, lambda g, out, x: (2.0 * g * x,)),
    "concat": _Op(_concat_fwd, _concat_bwd),
    "slice": _Op(_slice_fwd, _slice_bwd),
    "sum": _Op(_sum_fwd, lambda g, out, x, axis: _reduce_bwd(g, x, axis, 1.0)),
    "mean": _Op(_mean_fwd, _mean_bwd),
}


# ---------------------------------------------------------------------------
# graph


@dataclass
class Node:
    id: int
    kind: str
    inputs: tuple[int, ...]
    attrs: dict = field(default_factory=dict)
    value: np.ndarray | None = None
    name: str | None = None


class Graph:
    """Tape of executed operations; also a replayable program."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.inputs: dict[str, int] = {}
        self.outputs: list[int] = []

    def input(self, name: str, value) -> "Var":
        """Register a differentiable input bound to ``value``."""
        if name in self.inputs:
            raise ContractError(f"duplicate input name {name!r}")
        arr = np.array(value, dtype=np.float64)
        node = Node(len(self.nodes), "input", (), value=arr, name=name)
        self.nodes.append(node)
        self.inputs[name] = node.id
        return Var(self, node.id)

    def const(self, value) -> "Var":
        node = Node(len(self.nodes), "const", (), value=np.array(value, dtype=np.float64))
        self.nodes.append(node)
        return Var(self, node.id)

    def inputs_from(self, arrays: Mapping[str, np.ndarray]) -> dict[str, "Var"]:
        return {k: self.input(k, v) for k, v in arrays.items()}

    def apply(self, kind: str, args: Sequence["Var"], **attrs) -> "Var":
        for a in args:
            if a.graph is not self:
                raise ContractError("operands belong to different graphs")
        node = Node(len(self.nodes), kind, tuple(a.id for a in args), attrs)
        node.value = _run_node(node, [self.nodes[i].value for i in node.inputs])
        self.nodes.append(node)
        return Var(self, node.id)

    def set_outputs(self, *outs: "Var"):
        self.outputs = [o.id for o in outs]

    def value(self, v: "Var") -> np.ndarray:
        return self.nodes[v.id].value


def _run_node(node: Node, args: list[np.ndarray]) -> np.ndarray:
    op = OPS[node.kind]
    try:
        with np.errstate(all="ignore"):
            out = op.forward(*args, **node.attrs)
    except _ShapeProblem as exc:
        raise DimensionError(node.id, node.kind, str(exc)) from None
    out = np.asarray(out, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NumericError(node.id, node.kind)
    return out


class Var:
    """Handle to a node of a :class:`Graph`."""

    __slots__ = ("graph", "id")

    def __init__(self, graph: Graph, id: int):
        self.graph = graph
        self.id = id

    @property
    def value(self) -> np.ndarray:
        return self.graph.nodes[self.id].value

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def _lift(self, other) -> "Var":
        return other if isinstance(other, Var) else self.graph.const(other)

    def __add__(self, other):
        return self.graph.apply("add", [self, self._lift(other)])

    def __sub__(self, other):
        return self.graph.apply("sub", [self, self._lift(other)])

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return self.graph.apply("mul", [self, self._lift(other)])

    __rmul__ = __mul__

    def __matmul__(self, other):
        return self.graph.apply("matmul", [self, self._lift(other)])

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        n = self.graph.nodes[self.id]
        return f"Var(id={self.id}, kind={n.kind}, shape={self.shape})"


# functional spellings -------------------------------------------------------


def affine(x: Var, W: Var, b: Var) -> Var:
    return x.graph.apply("affine", [x, W, b])


def scale(x: Var, a: float, c: float = 0.0) -> Var:
    return x.graph.apply("scale", [x], a=float(a), c=float(c))


def relu(x: Var) -> Var:
    return x.graph.apply("relu", [x])


def sigmoid(x: Var) -> Var:
    return x.graph.apply("sigmoid", [x])


def tanh(x: Var) -> Var:
    return x.graph.apply("tanh", [x])


def exp(x: Var) -> Var:
    return x.graph.apply("exp", [x])


def square(x: Var) -> Var:
    return x.graph.apply("square", [x])


def concat(xs: Sequence[Var], axis: int = -1) -> Var:
    return xs[0].graph.apply("concat", list(xs), axis=axis)


def slice_(x: Var, start: int, stop: int, axis: int = -1) -> Var:
    return x.graph.apply("slice", [x], start=int(start), stop=int(stop), axis=axis)


def sum_(x: Var, axis: int | None = None) -> Var:
    return x.graph.apply("sum", [x], axis=axis)


def mean(x: Var, axis: int | None = None) -> Var:
    return x.graph.apply("mean", [x], axis=axis)


# ---------------------------------------------------------------------------
# execution


def _forward_all(graph: Graph, bindings: Mapping[str, np.ndarray] | None) -> list[np.ndarray]:
    bindings = bindings or {}
    unknown = set(bindings) - set(graph.inputs)
    if unknown:
        raise ContractError(f"bindings for unknown inputs: {sorted(unknown)}")
    vals: list[np.ndarray] = []
    for node in graph.nodes:
        if node.kind == "input":
            v = np.array(bindings.get(node.name, node.value), dtype=np.float64)
            if v.shape != node.value.shape:
                raise DimensionError(node.id, "input", f"binding for {node.name!r} has shape {v.shape}, "
                                     f"expected {node.value.shape}")
            vals.append(v)
        elif node.kind == "const":
            vals.append(node.value)
        else:
            vals.append(_run_node(node, [vals[i] for i in node.inputs]))
    return vals


def evaluate(graph: Graph, bindings: Mapping[str, np.ndarray] | None = None) -> list[np.ndarray]:
    """Replay ``graph`` with ``bindings`` overriding recorded input values.

    Returns the values of the designated outputs (all inputs not named in
    ``bindings`` keep the values they were recorded with).
    """
    if not graph.outputs:
        raise ContractError("graph has no designated outputs")
    vals = _forward_all(graph, bindings)
    return [vals[i] for i in graph.outputs]


def _backward(graph: Graph, vals: list[np.ndarray], out_id: int, seed: np.ndarray) -> list:
    grads: list[np.ndarray | None] = [None] * len(graph.nodes)
    grads[out_id] = seed
    for node in reversed(graph.nodes[: out_id + 1]):
        g = grads[node.id]
        if g is None or not node.inputs:
            continue
        args = [vals[i] for i in node.inputs]
        parts = OPS[node.kind].backward(g, vals[node.id], *args, **node.attrs)
        for i, gi in zip(node.inputs, parts):
            gi = np.asarray(gi, dtype=np.float64)
            grads[i] = gi if grads[i] is None else grads[i] + gi
    return grads


def gradients(graph: Graph, bindings: Mapping[str, np.ndarray] | None = None,
              seed=None, output: Var | None = None) -> dict[str, np.ndarray]:
    """Reverse-mode gradient of a scalar output with respect to every input.

    When ``bindings`` is None the values recorded during construction are
    reused and no forward replay happens.
    """
    if output is not None:
        out_id = output.id
    elif graph.outputs:
        out_id = graph.outputs[0]
    else:
        raise ContractError("graph has no designated outputs")
    vals = [n.value for n in graph.nodes] if bindings is None else _forward_all(graph, bindings)
    if vals[out_id].size != 1:
        raise ContractError(f"gradient needs a scalar output, node {out_id} has shape {vals[out_id].shape}")
    seed = np.ones_like(vals[out_id]) if seed is None else np.asarray(seed, dtype=np.float64)
    if seed.size != 1:
        raise ContractError("seed must hold a single value")
    grads = _backward(graph, vals, out_id, seed.reshape(vals[out_id].shape))
    return {name: (grads[i] if grads[i] is not None else np.zeros_like(vals[i]))
            for name, i in graph.inputs.items()}


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    n_checked: int
    worst: tuple[str, tuple] | None
    kinks: list[tuple[str, tuple]]

    @property
    def nondifferentiable(self) -> bool:
        return bool(self.kinks)


ROUNDOFF_FACTOR = 16.0


def _relu_masks(graph: Graph, vals: list[np.ndarray]) -> list[np.ndarray]:
    return [vals[n.inputs[0]] > 0 for n in graph.nodes if n.kind == "relu"]


def grad_check(graph: Graph, bindings: Mapping[str, np.ndarray] | None = None, h: float = 1e-5,
               tol: float = 1e-4, names: Iterable[str] | None = None) -> GradCheckReport:
    """Compare reverse-mode gradients against central differences.

    Coordinates whose perturbation moves any relu input across zero are
    reported as kinks and excluded from the error. The relative error uses
    a denominator no smaller than the rounding noise of the difference
    quotient divided by ``tol``, so gradients below that noise pass when
    they agree to within the noise.
    """
    if h <= 0:
        raise ContractError("h must be positive")
    out_id = graph.outputs[0] if graph.outputs else None
    if out_id is None:
        raise ContractError("graph has no designated outputs")
    base = {k: np.array(graph.nodes[i].value) for k, i in graph.inputs.items()}
    base.update({k: np.array(v, dtype=np.float64) for k, v in (bindings or {}).items()})
    analytic = gradients(graph, base)
    base_masks = _relu_masks(graph, _forward_all(graph, base))

    worst, worst_err, n, kinks = None, 0.0, 0, []
    for name in (names if names is not None else graph.inputs):
        x = base[name]
        for idx in np.ndindex(*x.shape):
            orig = x[idx]
            x[idx] = orig + h
            vp = _forward_all(graph, base)
            x[idx] = orig - h
            vm = _forward_all(graph, base)
            x[idx] = orig
            mp, mm = _relu_masks(graph, vp), _relu_masks(graph, vm)
            crossed = any(not (np.array_equal(a, b) and np.array_equal(a, c))
                          for a, b, c in zip(mp, mm, base_masks))
            if crossed:
                kinks.append((name, idx))
                continue
            fp, fm = float(vp[out_id].ravel()[0]), float(vm[out_id].ravel()[0])
            numeric = (fp - fm) / (2 * h)
            a = float(analytic[name][idx])
            # rounding in fp - fm caps how small a gradient can be resolved
            noise = ROUNDOFF_FACTOR * np.finfo(np.float64).eps * max(abs(fp), abs(fm), 1.0) / h
            err = abs(a - numeric) / max(abs(a), abs(numeric), noise / tol, 1e-8)
            n += 1
            if err > worst_err or worst is None:
                worst_err, worst = err, (name, idx)
    return GradCheckReport(worst_err, worst_err <= tol, n, worst, kinks)
