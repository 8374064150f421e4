"""Dense float64 tensors with reverse-mode automatic differentiation.

Data lives in row-major numpy buffers; the gradient graph is a tape of
closures built as operations execute.  Broadcasting follows the
trailing-dimension rule (numpy semantics).  Tensors are immutable after
creation except for gradient accumulation during backward().
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class ContractError(RuntimeError):
    """Raised when an operation is called outside its contract."""


_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """N-dimensional float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _result(data: np.ndarray, parents: tuple["Tensor", ...], backward_fn) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward_fn = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward_fn = None
        return out

    # -- basic introspection --------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ContractError(f"item() requires a scalar tensor, got shape {self.shape}")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g)  # copy: g may alias a buffer we don't own
        else:
            self.grad += g

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __pow__(self, exponent):
        return power(self, exponent)

    # -- shape ops -------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis, keepdims)

    def max(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_max(self, axis, keepdims)

    def backward(self) -> None:
        backward(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast to reach g's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a_shape, b_shape) -> None:
    for x, y in zip(reversed(a_shape), reversed(b_shape)):
        if x != y and x != 1 and y != 1:
            raise DimensionError(
                f"shapes {a_shape} and {b_shape} are not broadcastable"
            )


# -- elementwise binary ops ----------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape)
    out_data = a.data + b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return Tensor._result(out_data, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape)
    out_data = a.data - b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return Tensor._result(out_data, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape)
    out_data = a.data * b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor._result(out_data, (a, b), backward_fn)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape)
    out_data = a.data / b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * out_data / b.data, b.shape))

    return Tensor._result(out_data, (a, b), backward_fn)


def elementwise(a: Tensor, b: Tensor, op: str) -> Tensor:
    """Dispatch facade for the basic broadcasting binary operations."""
    try:
        fn = {"add": add, "sub": sub, "mul": mul}[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(_wrap(a), _wrap(b))


# -- elementwise unary ops -------------------------------------------------------


def _unary(a: Tensor, out_data: np.ndarray, local_grad_fn) -> Tensor:
    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g * local_grad_fn())

    return Tensor._result(out_data, (a,), backward_fn)


def power(a: Tensor, exponent: float) -> Tensor:
    e = float(exponent)
    out_data = a.data**e
    return _unary(a, out_data, lambda: e * a.data ** (e - 1.0))


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)
    return _unary(a, out_data, lambda: 0.5 / out_data)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    return _unary(a, out_data, lambda: out_data)


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)
    return _unary(a, out_data, lambda: 1.0 / a.data)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)
    return _unary(a, out_data, lambda: 1.0 - out_data * out_data)


def custom_unary(a: Tensor, forward_fn, grad_fn) -> Tensor:
    """Build a unary op from a forward array function and a local-gradient
    array function of the input data.  Used for spike nonlinearities whose
    backward rule is a surrogate rather than the true derivative."""
    out_data = forward_fn(a.data)
    return _unary(a, out_data, lambda: grad_fn(a.data))


# -- matmul ---------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul requires >=2-D operands, got {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.shape} @ {b.shape}"
        )
    _check_broadcast(a.shape[:-2], b.shape[:-2])

    if b.ndim == 2 and a.ndim > 2:
        # linear-layer case: collapse the stacked leading axes into one
        # 2-D product instead of a stack of small ones
        k, n = b.shape
        lead = a.shape[:-1]
        a2 = a.data.reshape(-1, k)
        out_data = (a2 @ b.data).reshape(*lead, n)

        def backward_fn(g):
            g2 = g.reshape(-1, n)
            if a.requires_grad:
                a._accumulate((g2 @ b.data.T).reshape(a.shape))
            if b.requires_grad:
                b._accumulate(a2.T @ g2)

        return Tensor._result(out_data, (a, b), backward_fn)

    out_data = a.data @ b.data

    def backward_fn(g):
        if a.requires_grad:
            ga = g @ b.data.swapaxes(-1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = a.data.swapaxes(-1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return Tensor._result(out_data, (a, b), backward_fn)


# -- reductions -------------------------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    axis = tuple(a % ndim if -ndim <= a < ndim else _axis_err(a, ndim) for a in axis)
    return axis


def _axis_err(a, ndim):
    raise DimensionError(f"axis {a} out of range for ndim {ndim}")


def _expand_reduced(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if not keepdims:
        for ax in sorted(axis):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ax = _norm_axis(axis, a.ndim)
    out_data = a.data.sum(axis=ax, keepdims=keepdims)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(np.ascontiguousarray(_expand_reduced(g, a.shape, ax, keepdims)))

    return Tensor._result(np.asarray(out_data), (a,), backward_fn)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ax = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in ax])) if ax else 1
    out_data = a.data.mean(axis=ax, keepdims=keepdims)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(np.ascontiguousarray(_expand_reduced(g, a.shape, ax, keepdims)) / n)

    return Tensor._result(np.asarray(out_data), (a,), backward_fn)


def reduce_max(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ax = _norm_axis(axis, a.ndim)
    out_data = a.data.max(axis=ax, keepdims=True)

    def backward_fn(g):
        if a.requires_grad:
            mask = (a.data == out_data).astype(np.float64)
            counts = mask.sum(axis=ax, keepdims=True)
            gg = _expand_reduced(g, a.shape, ax, keepdims)
            a._accumulate(gg * mask / counts)

    final = out_data if keepdims else out_data.squeeze(axis=ax)
    return Tensor._result(np.asarray(final), (a,), backward_fn)


def variance(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Biased (population) variance, built from differentiable primitives."""
    mu = reduce_mean(a, axis, keepdims=True)
    d = sub(a, mu)
    v = reduce_mean(mul(d, d), axis, keepdims)
    return v


def reduce(a: Tensor, axes, op: str, keepdims: bool = False) -> Tensor:
    """Dispatch facade for the reduction family."""
    try:
        fn = {
            "mean": reduce_mean,
            "var": variance,
            "sum": reduce_sum,
            "max": reduce_max,
        }[op]
    except KeyError:
        raise ContractError(f"unknown reduce op {op!r}") from None
    return fn(a, axes, keepdims)


# -- shape ops ---------------------------------------------------------------------


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out_data = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(
            f"cannot reshape {a.shape} (size {a.size}) into {shape}"
        ) from None

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return Tensor._result(out_data, (a,), backward_fn)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"transpose axes {axes} invalid for shape {a.shape}")
    out_data = np.ascontiguousarray(a.data.transpose(axes))
    inverse = tuple(np.argsort(axes))

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(np.ascontiguousarray(g.transpose(inverse)))

    return Tensor._result(out_data, (a,), backward_fn)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ContractError("concat of empty list")
    tensors = [_wrap(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim if -ndim <= axis < ndim else _axis_err(axis, ndim)
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != ndim or any(
            other[i] != base[i] for i in range(ndim) if i != axis
        ):
            raise DimensionError(
                f"concat shapes disagree off-axis: {tensors[0].shape} vs {t.shape}"
            )
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * ndim
                idx[axis] = slice(int(lo), int(hi))
                t._accumulate(np.ascontiguousarray(g[tuple(idx)]))

    return Tensor._result(out_data, tuple(tensors), backward_fn)


def split(a: Tensor, sizes: list[int], axis: int) -> list[Tensor]:
    axis = axis % a.ndim if -a.ndim <= axis < a.ndim else _axis_err(axis, a.ndim)
    if sum(sizes) != a.shape[axis]:
        raise DimensionError(
            f"split sizes {sizes} do not sum to axis length {a.shape[axis]}"
        )
    outs = []
    offset = 0
    for s in sizes:
        lo, hi = offset, offset + s
        offset = hi
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(lo, hi)
        piece = np.ascontiguousarray(a.data[tuple(idx)])

        def backward_fn(g, lo=lo, hi=hi):
            if a.requires_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.data)
                idx = [slice(None)] * a.ndim
                idx[axis] = slice(lo, hi)
                a.grad[tuple(idx)] += g

        outs.append(Tensor._result(piece, (a,), backward_fn))
    return outs


def repeat_axis(a: Tensor, axis: int, n: int) -> Tensor:
    """Insert a new axis of length n whose slices all equal the input.

    The gradient sums contributions over the repeated axis.
    """
    if n < 1:
        raise ContractError(f"repeat count must be >= 1, got {n}")
    axis = axis % (a.ndim + 1)
    out_data = np.ascontiguousarray(
        np.broadcast_to(np.expand_dims(a.data, axis), a.shape[:axis] + (n,) + a.shape[axis:])
    )

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g.sum(axis=axis))

    return Tensor._result(out_data, (a,), backward_fn)


# -- backward pass ------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Populates .grad on every requires_grad leaf reachable from the loss.
    The graph is consumed: a second call on the same loss is an error.
    """
    if loss.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return  # constant loss: every gradient is zero, nothing to do
    if loss._parents == ():
        if loss._backward_fn is None and loss.grad is None:
            loss.grad = np.ones_like(loss.data)
            return
        raise ContractError("backward already called on this graph")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p._parents:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        fn = node._backward_fn
        if fn is None:
            raise ContractError("backward already called on this graph")
        if node.grad is not None:
            fn(node.grad)
        node._backward_fn = None
        node._parents = ()
        if node is not loss:
            node.grad = None
