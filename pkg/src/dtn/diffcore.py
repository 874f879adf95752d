"""Small define-by-run reverse-mode autodiff over float64 numpy arrays.

Every op builds a node holding its output values plus a closure that maps
the output gradient to gradients for its parents. Nodes are numbered at
creation, so sorting the reachable set by id (descending) is a valid
reverse topological order and ``backward`` can walk it exactly once.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, DimensionError

NORM_EPS = 1e-12

_ids = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording (thread-local)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_id", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._id = next(_ids)
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._id = next(_ids)
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    # x == 0 takes the positive branch (slope 1)
    x = as_tensor(x)
    factor = np.where(x.data >= 0, 1.0, slope)
    return _node(x.data * factor, (x,), lambda g: (g * factor,), "leaky_relu")


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; the identity when not training or rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return _node(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


# -- linear algebra ------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: left operand axis 1 has size {a.shape[1]} but right operand axis 0 has size {b.shape[0]}")
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.data.ndim != 2:
        raise DimensionError(f"affine: x must be 2-D [B x D_in], got shape {x.shape}")
    if weight.data.ndim != 2:
        raise DimensionError(f"affine: weight must be 2-D [D_in x D_out], got shape {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(
            f"affine: x axis 1 (D_in={x.shape[1]}) does not match weight axis 0 ({weight.shape[0]})")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(
            f"affine: bias axis 0 has shape {bias.shape}, expected ({weight.shape[1]},) to match weight axis 1")
    xd, wd = x.data, weight.data

    def back(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return _node(xd @ wd + bias.data, (x, weight, bias), back, "affine")


def l2_normalize(x: Tensor) -> Tensor:
    """Row-wise unit-norm projection of a [B x D] tensor."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"l2_normalize expects [B x D], got shape {x.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", x.data, x.data))[:, None]
    if np.any(~(norms > NORM_EPS)):
        bad = int(np.flatnonzero(~(norms[:, 0] > NORM_EPS))[0])
        raise DegenerateInputError(f"row {bad} has norm {float(norms[bad, 0]):.3e} <= {NORM_EPS}")
    y = x.data / norms

    def back(g):
        return ((g - y * np.einsum("ij,ij->i", y, g)[:, None]) / norms,)

    return _node(y, (x,), back, "l2_normalize")


# -- reductions and reshaping -------------------------------------------------

def sum_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return _node(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    return _node(np.array(x.data.mean()), (x,),
                 lambda g: (np.broadcast_to(g / n, x.shape).copy(),), "mean")


def take_rows(x: Tensor, index) -> Tensor:
    """Gather rows ``x[index]``; repeated indices accumulate in the backward pass."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _node(x.data[index], (x,), back, "take_rows")


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = np.cumsum([p.shape[0] for p in parts])[:-1]
    return _node(np.concatenate([p.data for p in parts], axis=0), parts,
                 lambda g: tuple(np.split(g, sizes, axis=0)), "concat_rows")


def transpose(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return _node(x.data.T, (x,), lambda g: (g.T,), "transpose")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


# -- losses --------------------------------------------------------------------

def scaled_cross_entropy(scores: Tensor, temperature: Tensor, labels) -> Tensor:
    """Mean of -log softmax(temperature * scores)[label] over the batch."""
    scores, temperature = as_tensor(scores), as_tensor(temperature)
    if scores.data.ndim != 2:
        raise DimensionError(f"scores must be [B x N], got {scores.shape}")
    if temperature.data.size != 1:
        raise DimensionError(f"temperature must be a scalar, got shape {temperature.shape}")
    labels = np.asarray(labels, dtype=np.intp)
    b, n = scores.shape
    if labels.shape != (b,):
        raise DimensionError(f"labels axis 0 has size {labels.shape}, expected ({b},)")
    if b and (labels.min() < 0 or labels.max() >= n):
        raise IndexError(f"label out of range [0, {n}): {labels.tolist()}")
    alpha = float(temperature.data.reshape(()))
    logits = alpha * scores.data
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(b)
    loss = np.mean(log_z - shifted[rows, labels])

    def back(g):
        p = np.exp(shifted - log_z[:, None])
        p[rows, labels] -= 1.0
        dlogits = p * (float(g) / b)
        return dlogits * alpha, np.array((dlogits * scores.data).sum()).reshape(temperature.shape)

    return _node(np.array(loss), (scores, temperature), back, "scaled_cross_entropy")


# -- engine --------------------------------------------------------------------

def _reachable(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    nodes: list[Tensor] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        nodes.append(node)
        stack.extend(node._parents)
    nodes.sort(key=lambda t: t._id, reverse=True)
    return nodes


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        shape = loss.shape if isinstance(loss, Tensor) else type(loss).__name__
        raise ContractError(f"backward needs a scalar loss, got {shape}")
    if not loss.requires_grad:
        return
    nodes = _reachable(loss)
    for node in nodes:
        if not node.is_leaf:
            node.grad = np.zeros_like(node.data)
    loss.grad = loss.grad + np.ones_like(loss.data)
    for node in nodes:
        if node.is_leaf:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad = parent.grad + g


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
