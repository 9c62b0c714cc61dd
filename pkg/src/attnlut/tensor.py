"""Dense tensors and a reverse-mode gradient tape.

A :class:`Tensor` is a thin wrapper around a C-contiguous numpy array. Operations
in :mod:`attnlut.ops` (and the LUT/CP kernels) record themselves on the active
:class:`Tape` whenever one of their inputs is tracked, i.e. is a leaf with
``requires_grad=True`` or was itself produced by a recorded operation.

    >>> from attnlut import ops
    >>> w = Tensor([1.0, 2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = ops.sum(ops.square(w))
    >>> tape.backward(loss)[w]
    array([2., 4.])
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not satisfy an operation's contract."""


class NonFiniteError(ValueError):
    """Raised when NaN or infinite values reach an operation that rejects them."""


class GradientError(RuntimeError):
    """Raised for invalid backward calls (non-scalar loss, foreign tensors)."""


class Tensor:
    """Dense row-major array of reals, optionally tracked by a tape."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.array(data, dtype=dtype if dtype is not None else None, copy=True)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data: np.ndarray = np.asarray(arr, order="C")
        self.requires_grad = requires_grad
        self.name = name
        # (tape, node index) once produced by a recorded operation
        self.grad_id: tuple[Tape, int] | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = np.asarray(arr, order="C")
        t.requires_grad = False
        t.name = None
        t.grad_id = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    @property
    def tracked(self) -> bool:
        return self.requires_grad or self.grad_id is not None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # arithmetic sugar; the implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.add(ops.neg(self), other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by a python scalar")
        return ops.mul(self, 1.0 / other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)


_state = threading.local()


def active_tape() -> "Tape | None":
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class _Node:
    __slots__ = ("parents", "backward", "shape", "dtype")

    def __init__(self, parents, backward, shape, dtype):
        self.parents = parents
        self.backward = backward
        self.shape = shape
        self.dtype = dtype


class Tape:
    """Records differentiable operations in execution (hence topological) order.

    Use as a context manager; tapes nest per thread. ``backward`` walks the
    recorded nodes once, in reverse order.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_state, "stack", None)
        if stack is None:
            stack = _state.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, out: Tensor, inputs: Sequence[Tensor], backward: Callable) -> None:
        out.grad_id = (self, len(self.nodes))
        self.nodes.append(_Node(tuple(inputs), backward, out.shape, out.dtype))

    def backward(self, loss: Tensor) -> "Gradients":
        if loss.data.size != 1 or loss.ndim != 0:
            raise GradientError(f"loss must be a scalar tensor, got shape {loss.shape}")
        grads = Gradients()
        if loss.grad_id is None:
            if loss.requires_grad:
                grads._leaf[id(loss)] = (loss, np.ones_like(loss.data))
            return grads
        tape, start = loss.grad_id
        if tape is not self:
            raise GradientError("loss was recorded on a different tape")

        pending: list[np.ndarray | None] = [None] * (start + 1)
        pending[start] = np.ones(loss.shape, dtype=loss.dtype)
        for index in range(start, -1, -1):
            g = pending[index]
            if g is None:
                continue
            pending[index] = None
            node = self.nodes[index]
            parent_grads = node.backward(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.tracked:
                    continue
                if pg.shape != parent.shape:
                    raise ShapeError(
                        f"internal: gradient shape {pg.shape} != operand shape {parent.shape}"
                    )
                if parent.grad_id is not None and parent.grad_id[0] is self:
                    j = parent.grad_id[1]
                    pending[j] = pg if pending[j] is None else pending[j] + pg
                elif parent.requires_grad:
                    grads._accumulate(parent, pg)
        return grads


class Gradients:
    """Mapping from leaf tensors to their accumulated gradients.

    Leaves that did not contribute to the loss map to zeros.
    """

    def __init__(self):
        self._leaf: dict[int, tuple[Tensor, np.ndarray]] = {}

    def _accumulate(self, leaf: Tensor, g: np.ndarray) -> None:
        key = id(leaf)
        if key in self._leaf:
            self._leaf[key] = (leaf, self._leaf[key][1] + g)
        else:
            self._leaf[key] = (leaf, np.array(g, copy=True))

    def __getitem__(self, leaf: Tensor) -> np.ndarray:
        entry = self._leaf.get(id(leaf))
        if entry is None:
            return np.zeros_like(leaf.data)
        return entry[1]

    def __contains__(self, leaf: Tensor) -> bool:
        return id(leaf) in self._leaf

    def for_params(self, params: Iterable[Tensor]) -> list[np.ndarray]:
        return [self[p] for p in params]


def record(out_data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap ``out_data`` and, if any input is tracked, record it on the active tape.

    ``backward`` receives the output gradient and returns one gradient (or
    ``None``) per input, in order.
    """
    out = Tensor._wrap(out_data)
    tape = active_tape()
    if tape is not None and any(t.tracked for t in inputs):
        tape._push(out, inputs, backward)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
