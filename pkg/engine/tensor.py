"""
Tensor storage and reverse-mode automatic differentiation.

Operations record themselves on the active ``Graph`` (entered with a
``with`` block). Outside a graph nothing is recorded, which is how pure
inference runs concurrently on shared parameters.
"""

import contextlib
import contextvars
from dataclasses import dataclass
from typing import Any, Callable, Iterator, List, Optional, Sequence, Tuple, Type

import numpy as np

from core.exceptions import ContractError

_DTYPE: contextvars.ContextVar[Type[np.floating]] = contextvars.ContextVar(
    "keap_dtype", default=np.float32
)
_GRAPH: contextvars.ContextVar[Optional["Graph"]] = contextvars.ContextVar(
    "keap_graph", default=None
)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def default_dtype() -> Type[np.floating]:
    """Floating dtype used for new tensors in the current context"""
    return _DTYPE.get()


@contextlib.contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """Temporarily switch tensor arithmetic to another float width"""
    token = _DTYPE.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _DTYPE.reset(token)


class Tensor:
    """Dense row-major float array, optionally tracked for gradients"""

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.data: np.ndarray = np.ascontiguousarray(np.asarray(data, dtype=default_dtype()))
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node: Optional["Node"] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {list(self.shape)}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={list(self.shape)}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; the differentiable implementations live in engine.ops.

    def __add__(self, other: Any) -> "Tensor":
        from engine import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        from engine import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from engine import ops

        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from engine import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "Tensor":
        from engine import ops

        return ops.scale(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        from engine import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from engine import ops

        return ops.matmul(self, other)


@dataclass(eq=False)
class Node:
    """One recorded operation"""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: BackwardFn
    index: int
    graph: "Graph"


class Graph:
    """Append-only record of operations; backward walks it in reverse"""

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self._token: Optional[contextvars.Token] = None

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Graph":
        self._token = _GRAPH.set(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        if self._token is not None:
            _GRAPH.reset(self._token)
            self._token = None

    def record(
        self,
        op: str,
        inputs: Tuple[Tensor, ...],
        output: Tensor,
        backward_fn: BackwardFn,
    ) -> Node:
        node = Node(op, inputs, output, backward_fn, len(self.nodes), self)
        self.nodes.append(node)
        output.node = node
        output.requires_grad = True
        return node


def active_graph() -> Optional[Graph]:
    return _GRAPH.get()


def make_result(
    data: np.ndarray,
    inputs: Sequence[Tensor],
    op: str,
    backward_fn: BackwardFn,
) -> Tensor:
    """Wrap an op's output and record it when any input needs a gradient"""
    out = Tensor(data)
    graph = _GRAPH.get()
    if graph is not None and any(t.requires_grad for t in inputs):
        graph.record(op, tuple(inputs), out, backward_fn)
    return out


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor) -> None:
    """
    Populate ``.grad`` on every requires_grad tensor reachable from ``loss``.

    Leaf gradients accumulate into existing ``.grad`` arrays, so callers
    zero them first when starting a fresh step.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    if loss.node is None:
        raise ContractError("loss is not attached to a recorded graph")

    graph = loss.node.graph
    pending = {id(loss): np.ones_like(loss.data)}

    for node in reversed(graph.nodes[: loss.node.index + 1]):
        grad = pending.pop(id(node.output), None)
        if grad is None:
            continue
        node.output.grad = grad
        for tensor, g in zip(node.inputs, node.backward_fn(grad)):
            if g is None or not tensor.requires_grad:
                continue
            g = unbroadcast(g, tensor.shape)
            if tensor.node is None or tensor.node.graph is not graph:
                if tensor.grad is None:
                    tensor.grad = np.array(g, dtype=tensor.data.dtype, copy=True)
                else:
                    tensor.grad = tensor.grad + g
            else:
                key = id(tensor)
                pending[key] = pending[key] + g if key in pending else g
