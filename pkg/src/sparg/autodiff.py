"""Small reverse-mode autodiff engine over dense float64 arrays, plus Adam.

Forward values are computed eagerly. Every operation whose inputs require a
gradient is appended to the calling thread's tape; :func:`backward` walks the
tape in reverse, sums gradients into each participating tensor and clears it.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "Adam",
    "get_tape",
    "no_grad",
    "backward",
    "record_op",
    "tensor",
    "matmul",
    "hadamard",
    "add",
    "sub",
    "scale",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "square",
    "absolute",
    "tsum",
    "mean",
    "concat",
    "slice_",
    "transpose",
    "reshape",
    "add_bias",
]


class Tensor:
    """A dense float64 array that can take part in a recorded computation."""

    __slots__ = ("value", "requires_grad", "grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.array(value, dtype=np.float64)
        if self.value.ndim == 0:
            self.value = self.value.reshape(())
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else _not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # operator sugar; all routed through the recorded ops below
    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return hadamard(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    @property
    def T(self):
        return transpose(self)


def _not_scalar(t: Tensor):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(value, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(value, requires_grad=requires_grad, name=name)


class _Record:
    __slots__ = ("kind", "inputs", "output", "backward_fn")

    def __init__(self, kind, inputs, output, backward_fn):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations; inputs of each record precede it."""

    def __init__(self):
        self.records: list[_Record] = []
        self.enabled = True

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: _Record) -> None:
        self.records.append(record)

    def clear(self) -> None:
        self.records.clear()


_local = threading.local()


def get_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording anything on the current thread's tape."""
    tape = get_tape()
    prev = tape.enabled
    tape.enabled = False
    try:
        yield
    finally:
        tape.enabled = prev


def record_op(
    kind: str,
    inputs: Sequence[Tensor],
    value: np.ndarray,
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Wrap an eagerly computed value and put its backward rule on the tape.

    ``backward_fn`` maps the output gradient to one gradient per input
    (``None`` for inputs that do not need one).
    """
    tape = get_tape()
    needs = tape.enabled and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    if needs:
        tape.append(_Record(kind, tuple(inputs), out, backward_fn))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape."""
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = get_tape()
    if not tape.records:
        raise RuntimeError("backward called on an empty tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    try:
        for rec in reversed(tape.records):
            g_out = grads.pop(id(rec.output), None)
            if g_out is None:
                continue
            _accumulate(rec.output, g_out)
            for inp, g in zip(rec.inputs, rec.backward_fn(g_out)):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
        # whatever is left are leaves (parameters, user inputs)
        leaves = {id(inp): inp for rec in tape.records for inp in rec.inputs}
        for key, g in grads.items():
            if key in leaves:
                _accumulate(leaves[key], g)
    finally:
        tape.clear()


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=np.float64).reshape(t.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy's batching rules (both operands >= 1-D)."""
    if a.value.ndim == 0 or b.value.ndim == 0 or a.shape[-1] != b.shape[-2 if b.value.ndim > 1 else 0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value

    def bw(g):
        a2 = av[None, :] if av.ndim == 1 else av
        b2 = bv[:, None] if bv.ndim == 1 else bv
        g2 = g
        if av.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if bv.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = g2 @ np.swapaxes(b2, -1, -2)
        gb = np.swapaxes(a2, -1, -2) @ g2
        if av.ndim == 1:
            ga = ga[..., 0, :]
        if bv.ndim == 1:
            gb = gb[..., 0]
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return record_op("matmul", (a, b), av @ bv, bw)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("hadamard", a, b)
    av, bv = a.value, b.value
    return record_op(
        "hadamard",
        (a, b),
        av * bv,
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return record_op(
        "add", (a, b), a.value + b.value, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return record_op(
        "sub", (a, b), a.value - b.value, lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb))
    )


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """``x + bias`` where ``bias`` matches the trailing dimension of ``x``."""
    if bias.value.ndim != 1 or x.value.ndim == 0 or x.shape[-1] != bias.shape[0]:
        raise ValueError(f"broadcast-add-bias: incompatible shapes {x.shape} and {bias.shape}")
    sb = bias.shape
    return record_op(
        "broadcast-add-bias",
        (x, bias),
        x.value + bias.value,
        lambda g: (g, g.reshape(-1, sb[0]).sum(axis=0)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return record_op("scale", (a,), a.value * c, lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    on = a.value > 0
    return record_op("relu", (a,), np.where(on, a.value, 0.0), lambda g: (g * on,))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.value)
    return record_op("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.value)
    return record_op("exp", (a,), e, lambda g: (g * e,))


def log(a: Tensor) -> Tensor:
    v = a.value
    return record_op("log", (a,), np.log(v), lambda g: (g / v,))


def square(a: Tensor) -> Tensor:
    v = a.value
    return record_op("square", (a,), v * v, lambda g: (2.0 * g * v,))


def absolute(a: Tensor) -> Tensor:
    # d|x|/dx taken as 0 at x == 0
    sgn = np.sign(a.value)
    return record_op("abs", (a,), np.abs(a.value), lambda g: (g * sgn,))


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    axes = _norm_axis(axis, a.value.ndim)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return record_op("sum", (a,), a.value.sum(axis=axes, keepdims=keepdims), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    axes = _norm_axis(axis, a.value.ndim)
    n = int(np.prod([shape[ax] for ax in axes])) if axes else 1

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, shape),)

    return record_op("mean", (a,), a.value.mean(axis=axes, keepdims=keepdims), bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        shapes = " and ".join(str(t.shape) for t in tensors)
        raise ValueError(f"concat: incompatible shapes {shapes}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return record_op("concat", tensors, value, lambda g: tuple(np.split(g, bounds, axis=axis)))


def slice_(a: Tensor, index) -> Tensor:
    """Basic or integer-array indexing; gradient is scattered back with add."""
    shape = a.shape
    try:
        value = a.value[index]
    except IndexError as err:
        raise ValueError(f"slice: index {index!r} invalid for shape {shape}") from err

    def bw(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return record_op("slice", (a,), value, bw)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.value.ndim < 2:
        raise ValueError(f"transpose: need at least 2 dimensions, got shape {a.shape}")
    return record_op(
        "transpose", (a,), np.swapaxes(a.value, -1, -2), lambda g: (np.swapaxes(g, -1, -2),)
    )


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    try:
        value = a.value.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot view shape {old} as {tuple(shape)}") from None
    return record_op("reshape", (a,), value, lambda g: (g.reshape(old),))


# ---------------------------------------------------------------- optimizer


class Adam:
    """Adam with bias correction. State (m, v, t) is kept per parameter.

    ``step`` updates the parameters it is given (all by default) and clears
    their gradients afterwards, so parameters that did not take part in a
    step are simply left out of it.
    """

    def __init__(
        self,
        params: Iterable[Tensor],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state: dict[int, dict] = {
            id(p): {"m": np.zeros_like(p.value), "v": np.zeros_like(p.value), "t": 0}
            for p in self.params
        }

    def step(self, params: Iterable[Tensor] | None = None) -> None:
        targets = self.params if params is None else list(params)
        for i, p in enumerate(targets):
            if p.grad is None:
                label = p.name or f"#{i}"
                raise ValueError(f"adam: parameter {label} has no gradient")
            st = self.state.get(id(p))
            if st is None:
                raise ValueError(f"adam: parameter {p.name or i} is not managed by this optimizer")
            if st["m"].shape != p.shape:
                raise ValueError(f"adam: state shape {st['m'].shape} != parameter shape {p.shape}")
        for p in targets:
            st = self.state[id(p)]
            g = p.grad
            st["t"] += 1
            t = st["t"]
            st["m"] = self.beta1 * st["m"] + (1.0 - self.beta1) * g
            st["v"] = self.beta2 * st["v"] + (1.0 - self.beta2) * g * g
            m_hat = st["m"] / (1.0 - self.beta1**t)
            v_hat = st["v"] / (1.0 - self.beta2**t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.grad = None

    def state_arrays(self) -> list[dict]:
        return [self.state[id(p)] for p in self.params]
