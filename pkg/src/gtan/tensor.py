"""Dense 2-D tensors with a define-by-run reverse-mode tape.

Every value is a float64 matrix. Operations executed while a :class:`Tape`
is active are recorded together with a local backward rule; outside a tape
they are plain numpy computations, which is what inference uses.

Example::

    w = Tensor.parameter(np.ones((2, 2)), name="w")
    with Tape() as tape:
        loss = reduce(matmul(x, w), "sum")
    grads = backward(tape, loss, {"w": w})
"""
from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NonFiniteError

_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D, got array of shape {arr.shape}")
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def parameter(cls, data, name: str | None = None) -> "Tensor":
        return cls(data, requires_grad=True, name=name)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Tensor":
        return cls(np.zeros((rows, cols)))

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        # skips the copy in __init__; arr must be a fresh float64 2-D array
        t = cls.__new__(cls)
        arr.setflags(write=False)
        t.data = arr
        t.requires_grad = requires_grad
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self.data.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self.shape))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.shape))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _as_tensor(x, shape) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full(shape, float(x)))


class _Node:
    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended in execution order, so inputs always precede the
    node that consumes them and reverse iteration is a valid topological
    order for backpropagation.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def gradient(self, loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
        return backward(self, loss, params)


def _record(op: str, inputs: tuple, out: np.ndarray, rule: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    result = Tensor._wrap(out, needs)
    if needs and _ACTIVE:
        _ACTIVE[-1].nodes.append(_Node(op, inputs, result, rule))
    return result


def backward(tape: Tape, loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Backpropagate ``loss`` through ``tape``.

    Returns one gradient array per entry of ``params``; parameters that never
    reached the loss get zeros.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        local = node.backward(g)
        for inp, gi in zip(node.inputs, local):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            prev = grads.get(key)
            grads[key] = gi if prev is None else prev + gi
    out = {}
    for name, p in params.items():
        g = grads.get(id(p))
        out[name] = np.zeros(p.shape) if g is None else np.array(g, dtype=np.float64)
    return out


# ---------------------------------------------------------------- products


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def rule(g):
        return (g @ B.T if a.requires_grad else None,
                A.T @ g if b.requires_grad else None)

    return _record("matmul", (a, b), A @ B, rule)


def transpose(a: Tensor) -> Tensor:
    return _record("transpose", (a,), np.ascontiguousarray(a.data.T), lambda g: (g.T,))


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Join row vectors side by side (feature concatenation).

    All parts share their row count; column blocks appear in the given order.
    """
    parts = tuple(parts)
    if not parts:
        raise DimensionError("concat_rows needs at least one part")
    rows = parts[0].rows
    for p in parts[1:]:
        if p.rows != rows:
            raise DimensionError(
                f"concat_rows row-count mismatch: {[q.shape for q in parts]}")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def rule(g):
        return tuple(g[:, bounds[k]:bounds[k + 1]] for k in range(len(parts)))

    return _record("concat_rows", parts, np.concatenate([p.data for p in parts], axis=1), rule)


def stack_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack tensors vertically; all parts share their column count."""
    parts = tuple(parts)
    if not parts:
        raise DimensionError("stack_rows needs at least one part")
    cols = parts[0].cols
    for p in parts[1:]:
        if p.cols != cols:
            raise DimensionError(
                f"stack_rows column-count mismatch: {[q.shape for q in parts]}")
    bounds = np.cumsum([0] + [p.rows for p in parts])

    def rule(g):
        return tuple(g[bounds[k]:bounds[k + 1]] for k in range(len(parts)))

    return _record("stack_rows", parts, np.concatenate([p.data for p in parts], axis=0), rule)


# ------------------------------------------------------------- elementwise


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"elementwise {kind} shape mismatch: {a.shape} vs {b.shape}")
    A, B = a.data, b.data
    if kind == "add":
        return _record("add", (a, b), A + B, lambda g: (g, g))
    if kind == "sub":
        return _record("sub", (a, b), A - B, lambda g: (g, -g))
    if kind == "mul":
        return _record("mul", (a, b), A * B, lambda g: (g * B, g * A))
    raise ValueError(f"unknown elementwise kind {kind!r}")


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record("scale", (a,), a.data * c, lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record("add_scalar", (a,), a.data + c, lambda g: (g,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a 1 x cols row vector to every row of ``x``."""
    if b.rows != 1 or b.cols != x.cols:
        raise DimensionError(f"add_bias needs a 1x{x.cols} bias, got {b.shape}")
    return _record("add_bias", (x, b), x.data + b.data,
                   lambda g: (g, g.sum(axis=0, keepdims=True)))


def scale_rows(x: Tensor, w: Tensor) -> Tensor:
    """Multiply row ``i`` of ``x`` by the scalar ``w[i, 0]``."""
    if w.cols != 1 or w.rows != x.rows:
        raise DimensionError(f"scale_rows needs a {x.rows}x1 weight column, got {w.shape}")
    X, W = x.data, w.data
    return _record("scale_rows", (x, w), X * W,
                   lambda g: (g * W, (g * X).sum(axis=1, keepdims=True)))


# ------------------------------------------------------------- activations


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(x: Tensor, kind: str) -> Tensor:
    X = x.data
    if not np.isfinite(X).all():
        raise NonFiniteError(f"non-finite input to {kind} activation")
    if kind == "relu":
        mask = X > 0
        return _record("relu", (x,), np.where(mask, X, 0.0), lambda g: (g * mask,))
    if kind == "sigmoid":
        y = _sigmoid(X)
        return _record("sigmoid", (x,), y, lambda g: (g * y * (1.0 - y),))
    if kind == "tanh":
        y = np.tanh(X)
        return _record("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))
    raise ValueError(f"unknown activation {kind!r}")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    return activation(x, "tanh")


# ----------------------------------------------------------------- softmax


def softmax_vec(x: Tensor) -> Tensor:
    """Softmax over a 1 x n row vector, shifted by its max for stability."""
    if x.rows != 1:
        raise DimensionError(f"softmax_vec expects a 1xn vector, got {x.shape}")
    if x.cols == 0:
        raise DimensionError("softmax_vec of an empty vector")
    z = np.exp(x.data - x.data.max())
    y = z / z.sum()

    def rule(g):
        return (y * (g - (g * y).sum()),)

    return _record("softmax_vec", (x,), y, rule)


def segment_softmax(x: Tensor, lengths: Sequence[int]) -> Tensor:
    """Independent softmaxes over consecutive runs of an m x 1 column.

    ``lengths`` partitions the rows; every run must be nonempty.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    if x.cols != 1 or int(lengths.sum()) != x.rows:
        raise DimensionError(
            f"segment_softmax: column of {x.rows} rows vs segment total {int(lengths.sum())}")
    if (lengths <= 0).any():
        raise DimensionError("segment_softmax: empty segment")
    starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    seg = np.repeat(np.arange(len(lengths)), lengths)
    v = x.data[:, 0]
    z = np.exp(v - np.maximum.reduceat(v, starts)[seg])
    y = (z / np.add.reduceat(z, starts)[seg]).reshape(-1, 1)

    def rule(g):
        dot = np.add.reduceat((g * y)[:, 0], starts)[seg].reshape(-1, 1)
        return (y * (g - dot),)

    return _record("segment_softmax", (x,), y, rule)


# -------------------------------------------------------------- reductions


def reduce(x: Tensor, kind: str) -> Tensor:
    if x.rows == 0 or x.cols == 0:
        raise DimensionError(f"reduce {kind} of an empty tensor {x.shape}")
    shape = x.shape
    if kind == "sum":
        return _record("sum", (x,), x.data.sum().reshape(1, 1),
                       lambda g: (np.full(shape, g[0, 0]),))
    if kind == "mean_rows":
        n = shape[0]
        return _record("mean_rows", (x,), x.data.mean(axis=0, keepdims=True),
                       lambda g: (np.repeat(g / n, n, axis=0),))
    raise ValueError(f"unknown reduction {kind!r}")


def lookup(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows of ``table``; the backward pass scatter-adds into it."""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    n = table.rows
    if idx.size:
        bad = idx[(idx < 0) | (idx >= n)]
        if bad.size:
            raise IndexError(f"lookup index {int(bad[0])} out of range for {n} rows")
    shape = table.shape

    def rule(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _record("lookup", (table,), table.data[idx], rule)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Rows ``start:stop`` of ``x`` as a new tensor."""
    if not 0 <= start <= stop <= x.rows:
        raise IndexError(f"row slice {start}:{stop} out of range for {x.rows} rows")
    shape = x.shape

    def rule(g):
        out = np.zeros(shape)
        out[start:stop] = g
        return (out,)

    return _record("slice_rows", (x,), x.data[start:stop].copy(), rule)
