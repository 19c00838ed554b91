"""
The tapes of the reverse-mode differentiation: graphs, nodes, tensors.

A graph is an append-only list of nodes. Every node remembers the indices
of its inputs (which always precede it) and a closure that maps the gradient
of its output to the gradients of its inputs (the vector-Jacobian product).
The backward pass walks the nodes in the reverse order of their creation,
so every node is visited exactly once, and all gradients of its output
are accumulated before it is visited.

Tensors are thin handles: a value plus the node that produced it.
The leaves are named; the gradients are reported by these names.
"""
import dataclasses
from typing import Callable, Collection, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from epac.structs import frames
from epac.structs import params

VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Operand = Union['Tensor', float, int]


class PreconditionError(ValueError):
    """ The operands of an operation are invalid (usually their shapes). """


@dataclasses.dataclass(frozen=True)
class Node:
    op: str
    inputs: Tuple[int, ...]
    vjp: Optional[VJP]
    shape: Tuple[int, ...]
    name: Optional[str] = None


class Graph:
    """ An append-only tape of operations. """

    def __init__(self) -> None:
        super().__init__()
        self.nodes: List[Node] = []
        self.leaves: Dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def record(
            self,
            op: str,
            data: np.ndarray,
            inputs: Sequence['Tensor'] = (),
            vjp: Optional[VJP] = None,
            name: Optional[str] = None,
    ) -> 'Tensor':
        for tensor in inputs:
            if tensor.graph is not self:
                raise PreconditionError(f"{op}: operands belong to different graphs.")
        data = np.asarray(data, dtype=np.float64)
        node = Node(op=op, inputs=tuple(t.index for t in inputs), vjp=vjp, shape=data.shape, name=name)
        self.nodes.append(node)
        return Tensor(data=data, graph=self, index=len(self.nodes) - 1)

    def constant(self, data: Union[np.ndarray, float], provenance: Optional[frames.Provenance] = None) -> 'Tensor':
        tensor = self.record('constant', np.array(data, dtype=np.float64))
        tensor.provenance = provenance
        return tensor

    def leaf(self, name: str, data: np.ndarray) -> 'Tensor':
        if name in self.leaves:
            raise PreconditionError(f"Leaf {name!r} is already in the graph.")
        tensor = self.record('leaf', np.array(data, dtype=np.float64), name=name)
        self.leaves[name] = tensor.index
        return tensor


class Tensor:
    """
    A value in a graph.

    Only scalars broadcast in the arithmetic: all other operands
    must have exactly the same shapes.
    """

    __slots__ = ('data', 'graph', 'index', 'provenance')

    def __init__(self, *, data: np.ndarray, graph: Graph, index: int) -> None:
        super().__init__()
        self.data = data
        self.graph = graph
        self.index = index
        self.provenance: Optional[frames.Provenance] = None

    def __repr__(self) -> str:
        return f'Tensor(shape={self.shape}, op={self.graph.nodes[self.index].op!r})'

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    def item(self) -> float:
        if self.data.size != 1:
            raise PreconditionError(f"Only single-valued tensors convert to floats, got {self.shape}.")
        return float(self.data.reshape(()))

    def __add__(self, other: Operand) -> 'Tensor':
        return add(self, other)

    def __radd__(self, other: Operand) -> 'Tensor':
        return add(other, self)

    def __sub__(self, other: Operand) -> 'Tensor':
        return sub(self, other)

    def __rsub__(self, other: Operand) -> 'Tensor':
        return sub(other, self)

    def __mul__(self, other: Operand) -> 'Tensor':
        return mul(self, other)

    def __rmul__(self, other: Operand) -> 'Tensor':
        return mul(other, self)

    def __truediv__(self, other: Operand) -> 'Tensor':
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> 'Tensor':
        return div(other, self)

    def __neg__(self) -> 'Tensor':
        return neg(self)


Bound = Mapping[str, Tensor]


def bind(
        graph: Graph,
        values: params.ParamSet,
        trainable: Optional[Collection[str]] = None,
) -> Dict[str, Tensor]:
    """
    Copy the parameters into a graph: as named leaves or as constants.

    By default, all parameters are trainable. With an empty collection,
    the graph only evaluates (e.g. for inference-mode coding).
    """
    chosen = set(values) if trainable is None else set(trainable)
    return {
        name: graph.leaf(name, value) if name in chosen else graph.constant(value)
        for name, value in values.items()
    }


def backward(graph: Graph, loss: Tensor) -> Dict[str, np.ndarray]:
    """
    The gradients of a scalar loss w.r.t. all leaves of the graph.

    The leaves that do not contribute to the loss get zero gradients.
    """
    if loss.graph is not graph:
        raise PreconditionError("The loss does not belong to the graph.")
    if loss.shape != ():
        raise PreconditionError(f"The loss must be a scalar, got shape {loss.shape}.")

    grads: List[Optional[np.ndarray]] = [None] * (loss.index + 1)
    grads[loss.index] = np.ones((), dtype=np.float64)
    for index in range(loss.index, -1, -1):
        grad = grads[index]
        node = graph.nodes[index]
        if grad is None or node.vjp is None:
            continue
        for input_index, input_grad in zip(node.inputs, node.vjp(grad)):
            if input_grad is None:
                continue
            previous = grads[input_index]
            grads[input_index] = input_grad if previous is None else previous + input_grad

    result: Dict[str, np.ndarray] = {}
    for name, index in graph.leaves.items():
        grad = grads[index] if index <= loss.index else None
        result[name] = np.zeros(graph.nodes[index].shape) if grad is None else np.array(grad)
    return result


def lift(graph: Graph, value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else graph.constant(float(value))


def _pair(a: Operand, b: Operand, op: str) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        graph = a.graph
    elif isinstance(b, Tensor):
        graph = b.graph
    else:
        raise PreconditionError(f"{op}: at least one operand must be a tensor.")
    ta, tb = lift(graph, a), lift(graph, b)
    check_shapes(ta, tb, op)
    return ta, tb


def check_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    if len(a.shape) != len(b.shape):
        raise PreconditionError(f"{op}: rank mismatch: {a.shape} vs {b.shape}.")
    for dim, (sa, sb) in enumerate(zip(a.shape, b.shape)):
        if sa != sb:
            raise PreconditionError(f"{op}: shape mismatch at dimension {dim}: {sa} vs {sb} "
                                    f"(in {a.shape} vs {b.shape}).")


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """ Reduce a gradient back to a scalar operand's shape (the only broadcasting). """
    return grad.sum().reshape(shape) if shape == () and grad.shape != () else grad


def add(a: Operand, b: Operand) -> Tensor:
    ta, tb = _pair(a, b, 'add')

    def vjp(g: np.ndarray) -> Sequence[np.ndarray]:
        return unbroadcast(g, ta.shape), unbroadcast(g, tb.shape)

    return ta.graph.record('add', ta.data + tb.data, (ta, tb), vjp)


def sub(a: Operand, b: Operand) -> Tensor:
    ta, tb = _pair(a, b, 'sub')

    def vjp(g: np.ndarray) -> Sequence[np.ndarray]:
        return unbroadcast(g, ta.shape), unbroadcast(-g, tb.shape)

    return ta.graph.record('sub', ta.data - tb.data, (ta, tb), vjp)


def mul(a: Operand, b: Operand) -> Tensor:
    ta, tb = _pair(a, b, 'mul')

    def vjp(g: np.ndarray) -> Sequence[np.ndarray]:
        return unbroadcast(g * tb.data, ta.shape), unbroadcast(g * ta.data, tb.shape)

    return ta.graph.record('mul', ta.data * tb.data, (ta, tb), vjp)


def div(a: Operand, b: Operand) -> Tensor:
    ta, tb = _pair(a, b, 'div')
    out = ta.data / tb.data

    def vjp(g: np.ndarray) -> Sequence[np.ndarray]:
        return unbroadcast(g / tb.data, ta.shape), unbroadcast(-g * out / tb.data, tb.shape)

    return ta.graph.record('div', out, (ta, tb), vjp)


def neg(a: Tensor) -> Tensor:
    return a.graph.record('neg', -a.data, (a,), lambda g: (-g,))
