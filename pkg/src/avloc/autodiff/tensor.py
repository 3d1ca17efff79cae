"""Reverse-mode autodiff on dense numpy arrays.

A ``Tensor`` wraps a float32 or float64 ndarray and remembers how it was
produced; calling :meth:`Tensor.backward` on a scalar walks the tape in
reverse topological order and accumulates gradients into every reachable
tensor with ``requires_grad``. float32 is the training precision, float64
the verification precision used by the finite-difference checks.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import GraphError, ShapeError

DEFAULT_DTYPE = np.float32

_grad_enabled = True
_debug_checks = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle finiteness assertions after every forward op (slow; for tests)."""
    global _debug_checks
    _debug_checks = bool(enabled)


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
        arr = data
    else:
        arr = np.asarray(data, dtype=DEFAULT_DTYPE)
    if dtype is not None and arr.dtype != dtype:
        arr = arr.astype(dtype)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the compute graph holding a dense float array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction ----------------------------------------------------

    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple["Tensor", ...], backward_fn) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        if _debug_checks and not np.all(np.isfinite(data)):
            raise GraphError("non-finite values produced by a forward op")
        return out

    # -- basic introspection ----------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        """A defensive copy of the underlying array."""
        return self.data.copy()

    def __repr__(self) -> str:
        grad_tag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{grad_tag})"

    # -- backward pass ----------------------------------------------------

    def backward(self) -> None:
        """Accumulate dSelf/dX into every reachable tensor's ``grad``.

        Repeated calls accumulate; callers zero parameter gradients between
        optimization steps.
        """
        if self.ndim != 0:
            raise GraphError(f"backward requires a scalar loss, got shape {self.shape}")
        order = self._toposort()
        # Interior nodes get a fresh gradient each pass; only leaves (inputs,
        # Parameters) accumulate across repeated backward calls.
        for node in order:
            if node._backward is not None:
                node.grad = None
        self._accumulate(np.ones((), dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _toposort(self) -> list["Tensor"]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- elementwise arithmetic --------------------------------------------

    def _check_binary(self, other: "Tensor", op: str) -> None:
        try:
            np.broadcast_shapes(self.shape, other.shape)
        except ValueError:
            raise ShapeError(f"{op}: shapes {self.shape} and {other.shape} do not broadcast") from None

    @staticmethod
    def _coerce(other):
        """Wrap bare ndarrays as constant tensors; leave scalars alone."""
        if isinstance(other, np.ndarray):
            return Tensor(other)
        return other

    def __add__(self, other):
        other = Tensor._coerce(other)
        if not isinstance(other, Tensor):
            c = float(other)
            return Tensor._result(self.data + c, (self,), lambda g: self._accumulate(g))
        self._check_binary(other, "add")
        out_data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))

        return Tensor._result(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: self._accumulate(-g))

    def __sub__(self, other):
        other = Tensor._coerce(other)
        if not isinstance(other, Tensor):
            c = float(other)
            return Tensor._result(self.data - c, (self,), lambda g: self._accumulate(g))
        self._check_binary(other, "sub")
        out_data = self.data - other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g, other.shape))

        return Tensor._result(out_data, (self, other), backward)

    def __rsub__(self, other):
        c = float(other)
        return Tensor._result(c - self.data, (self,), lambda g: self._accumulate(-g))

    def __mul__(self, other):
        other = Tensor._coerce(other)
        if not isinstance(other, Tensor):
            c = float(other)
            return Tensor._result(self.data * c, (self,), lambda g: self._accumulate(g * c))
        self._check_binary(other, "mul")
        out_data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))

        return Tensor._result(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._coerce(other)
        if not isinstance(other, Tensor):
            return self * (1.0 / float(other))
        self._check_binary(other, "div")
        out_data = self.data / other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * self.data / (other.data * other.data), other.shape))

        return Tensor._result(out_data, (self, other), backward)

    def __rtruediv__(self, other):
        c = float(other)
        out_data = c / self.data

        def backward(g):
            self._accumulate(-g * c / (self.data * self.data))

        return Tensor._result(out_data, (self,), backward)

    def __pow__(self, exponent):
        p = float(exponent)
        out_data = self.data ** p

        def backward(g):
            self._accumulate(g * p * self.data ** (p - 1.0))

        return Tensor._result(out_data, (self,), backward)

    # -- nonlinearities -----------------------------------------------------

    def relu(self):
        out_data = np.maximum(self.data, 0)

        def backward(g):
            self._accumulate(g * (self.data > 0))

        return Tensor._result(out_data, (self,), backward)

    def sigmoid(self):
        x = self.data
        out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

        def backward(g):
            self._accumulate(g * out_data * (1.0 - out_data))

        return Tensor._result(out_data, (self,), backward)

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g):
            self._accumulate(g * out_data)

        return Tensor._result(out_data, (self,), backward)

    def log(self):
        out_data = np.log(self.data)

        def backward(g):
            self._accumulate(g / self.data)

        return Tensor._result(out_data, (self,), backward)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward(g):
            self._accumulate(g * 0.5 / out_data)

        return Tensor._result(out_data, (self,), backward)

    def clamp(self, lo: float | None = None, hi: float | None = None):
        """Clip values; gradient flows only where the input was not clipped."""
        out_data = np.clip(self.data, lo, hi)
        inside = np.ones_like(self.data, dtype=bool)
        if lo is not None:
            inside &= self.data > lo
        if hi is not None:
            inside &= self.data < hi

        def backward(g):
            self._accumulate(g * inside)

        return Tensor._result(out_data, (self,), backward)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.shape).astype(self.data.dtype, copy=False))
            else:
                g_exp = g if keepdims else np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g_exp, self.shape))

        return Tensor._result(out_data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    # -- shape manipulation ----------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)
        src_shape = self.shape

        def backward(g):
            self._accumulate(g.reshape(src_shape))

        return Tensor._result(out_data, (self,), backward)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)
        out_data = np.transpose(self.data, axes)

        def backward(g):
            self._accumulate(np.transpose(g, inverse))

        return Tensor._result(out_data, (self,), backward)

    def __getitem__(self, key):
        out_data = self.data[key]
        src_shape = self.shape

        def backward(g):
            full = np.zeros(src_shape, dtype=g.dtype)
            full[key] = g
            self._accumulate(full)

        return Tensor._result(out_data, (self,), backward)

    # -- linear algebra -----------------------------------------------------

    def __matmul__(self, other: "Tensor"):
        if not isinstance(other, Tensor):
            other = Tensor(other, dtype=self.data.dtype)
        if self.ndim < 2 or other.ndim < 2:
            raise ShapeError(f"matmul requires rank >= 2 operands, got {self.shape} and {other.shape}")
        if self.shape[-1] != other.shape[-2]:
            raise ShapeError(f"matmul inner extents differ: {self.shape} vs {other.shape}")
        out_data = np.matmul(self.data, other.data)

        def backward(g):
            if self.requires_grad:
                ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self._accumulate(_unbroadcast(ga, self.shape))
            if other.requires_grad:
                gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                other._accumulate(_unbroadcast(gb, other.shape))

        return Tensor._result(out_data, (self, other), backward)


class Parameter(Tensor):
    """A named trainable tensor whose gradient buffer always exists."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.data.dtype.name})"
