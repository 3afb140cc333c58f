"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable primitive records one entry on the thread-local tape
when gradient recording is on and at least one input requires a gradient.
``backward`` replays the tape in exact reverse order and then clears it.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class NumericsError(Exception):
    pass


class ShapeMismatch(NumericsError, ValueError):
    pass


class NonFiniteValue(NumericsError, FloatingPointError):
    pass


class AllMasked(NumericsError, ValueError):
    pass


class NoTape(NumericsError, RuntimeError):
    pass


class IndexOutOfRange(NumericsError, IndexError):
    pass


@dataclass
class _Record:
    out: "Tensor"
    parents: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered log of recorded primitives for one thread."""

    def __init__(self) -> None:
        self.records: list[_Record] = []

    def __len__(self) -> int:
        return len(self.records)

    def record(self, out: "Tensor", parents, backward) -> None:
        out._recorded = True
        self.records.append(_Record(out, tuple(parents), backward))

    def clear(self) -> None:
        for rec in self.records:
            rec.out._recorded = False
        self.records.clear()


_local = threading.local()


def get_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


def is_grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad():
    prev = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteValue(f"{op} produced a non-finite value")
    return arr


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_recorded", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str = "") -> None:
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, "Tensor")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = np.zeros_like(arr) if requires_grad else None
        self.name = name
        self._recorded = False

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.name = ""
        t._recorded = False
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    __float__ = item

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("division is only defined by a scalar")
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return mean(self, axis=axis)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """A named leaf tensor whose gradient is accumulated by ``backward``."""

    __slots__ = ()

    def __init__(self, data, name: str = "") -> None:
        super().__init__(data, requires_grad=True, name=name)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(arr: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    _check_finite(arr, op)
    out = Tensor._wrap(arr)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        get_tape().record(out, parents, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-D @ 2-D, 1-D @ 2-D and 2-D @ 1-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or (a.ndim == 1 and b.ndim == 1):
        raise ShapeMismatch(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        if A.ndim == 1:
            return B @ g, np.outer(A, g)
        if B.ndim == 1:
            return np.outer(g, B), A.T @ g
        return g @ B.T, A.T @ g

    return _make(A @ B, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeMismatch("transpose expects a matrix")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {a.shape} -> {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out, dtype=np.float64), (a,), backward, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    if n == 0:
        raise ShapeMismatch("mean over an empty axis")
    return scale(tsum(a, axis=axis), 1.0 / n)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat of nothing")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return np.split(g, bounds, axis=axis)

    return _make(out, tensors, backward, "concat")


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    return concat(tensors, axis=0)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    return concat([reshape(t, (1,) + t.shape) for t in tensors], axis=0)


def index(a: Tensor, key) -> Tensor:
    """Basic or integer-array indexing; gradients scatter-add back."""
    if isinstance(key, np.ndarray) and key.dtype.kind in "iu" and key.size:
        if key.min() < -a.shape[0] or key.max() >= a.shape[0]:
            raise IndexOutOfRange(f"index out of range for axis of length {a.shape[0]}")
    try:
        out = a.data[key]
    except IndexError as exc:
        raise IndexOutOfRange(str(exc)) from None

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return _make(np.array(out, dtype=np.float64), (a,), backward, "index")


def take_rows(a: Tensor, idx) -> Tensor:
    return index(a, np.asarray(idx, dtype=np.intp))


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    return index(a, slice(start, stop))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softmax_row(x: Tensor, mask=None) -> Tensor:
    """Max-stabilised softmax of a 1-D tensor; masked-out entries are exactly 0."""
    x = as_tensor(x)
    if x.ndim != 1:
        raise ShapeMismatch("softmax_row expects a vector")
    keep = np.ones(x.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if keep.shape != x.shape:
        raise ShapeMismatch(f"mask shape {keep.shape} != {x.shape}")
    if not keep.any():
        raise AllMasked("softmax over an all-masked row")
    z = np.where(keep, x.data - x.data[keep].max(), 0.0)
    e = np.where(keep, np.exp(z), 0.0)
    out = e / e.sum()

    def backward(g):
        return (out * (g - np.dot(out, g)),)

    return _make(out, (x,), backward, "softmax_row")


def log_softmax(x: Tensor) -> Tensor:
    """Log-softmax along the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def backward(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _make(out, (x,), backward, "log_softmax")


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Negative log-likelihood of ``target``.

    A 1-D ``logits`` takes one integer class; a 2-D batch takes one class per
    row and the result is the row mean.
    """
    if logits.ndim == 1:
        target = int(target)
        if not 0 <= target < logits.shape[0]:
            raise IndexOutOfRange(f"target {target} outside {logits.shape[0]} classes")
        return scale(index(log_softmax(logits), target), -1.0)
    if logits.ndim != 2:
        raise ShapeMismatch("cross_entropy expects 1-D or 2-D logits")
    target = np.asarray(target, dtype=np.intp)
    if target.shape != (logits.shape[0],):
        raise ShapeMismatch("one target per logit row required")
    if target.size and (target.min() < 0 or target.max() >= logits.shape[1]):
        raise IndexOutOfRange("target class outside logit width")
    picked = index(log_softmax(logits), (np.arange(target.size), target))
    return scale(tsum(picked), -1.0 / max(target.size, 1))


class Segments:
    """Contiguous, non-empty row groups of a sorted segment-id vector."""

    __slots__ = ("ids", "starts", "n")

    def __init__(self, ids: np.ndarray, n: int) -> None:
        ids = np.asarray(ids, dtype=np.intp)
        if ids.size and np.any(np.diff(ids) < 0):
            raise ValueError("segment ids must be sorted")
        starts = np.searchsorted(ids, np.arange(n))
        ends = np.append(starts[1:], ids.size)
        if n and np.any(ends <= starts):
            raise ValueError("every segment must be non-empty")
        self.ids = ids
        self.starts = starts
        self.n = n


def segment_sum(x: Tensor, seg: Segments) -> Tensor:
    """Sum rows of ``x`` within each segment (axis 0)."""
    if x.shape[0] != seg.ids.size:
        raise ShapeMismatch("segment_sum: row count != segment id count")
    out = np.add.reduceat(x.data, seg.starts, axis=0)
    return _make(out, (x,), lambda g: (g[seg.ids],), "segment_sum")


def segment_softmax(scores: Tensor, seg: Segments) -> Tensor:
    """Softmax over the rows of each segment, independently per column."""
    if scores.shape[0] != seg.ids.size:
        raise ShapeMismatch("segment_softmax: row count != segment id count")
    s = scores.data
    peak = np.maximum.reduceat(s, seg.starts, axis=0)
    e = np.exp(s - peak[seg.ids])
    total = np.add.reduceat(e, seg.starts, axis=0)
    out = e / total[seg.ids]

    def backward(g):
        inner = np.add.reduceat(out * g, seg.starts, axis=0)
        return (out * (g - inner[seg.ids]),)

    return _make(out, (scores,), backward, "segment_softmax")


def backward(loss: Tensor) -> None:
    """Accumulate d loss / d leaf into every reachable leaf's ``grad``."""
    if loss.size != 1:
        raise ShapeMismatch("backward expects a scalar loss")
    tape = get_tape()
    if not loss._recorded:
        raise NoTape("loss was not produced under gradient recording")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        for parent, pg in zip(rec.parents, rec.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._recorded:
                key = id(parent)
                prev = grads.get(key)
                grads[key] = pg if prev is None else prev + pg
            else:
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += pg
    tape.clear()
