import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..errors import ContractError, NonFiniteError

logger = logging.getLogger(__name__)

# Maps the upstream gradient of a node to one gradient per input (None for constants).
VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]


@dataclass
class _Node:
    parents: tuple[Optional[int], ...]
    vjp: Optional[VJP]
    shape: tuple[int, ...]
    name: Optional[str] = None

    @property
    def is_leaf(self) -> bool:
        return self.vjp is None


class Tensor:
    """A float64 array, optionally recorded on a tape.

    Tensors without a tape are constants: ops on them just compute values,
    which keeps evaluation-only forward passes free of bookkeeping.
    """

    __slots__ = ("data", "tape", "index")

    def __init__(self, data: ArrayLike, tape: Optional["Tape"] = None, index: Optional[int] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.index = index

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def requires_grad(self) -> bool:
        return self.tape is not None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tracked = "tracked" if self.requires_grad else "const"
        return f"Tensor(shape={self.shape}, {tracked})"

    def __add__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.matmul(self, other)


def as_tensor(value: ArrayLike) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class Gradients:
    """Gradients of a scalar root with respect to every leaf of a tape."""

    _by_index: dict[int, np.ndarray] = field(default_factory=dict)
    _names: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key: Union[Tensor, str]) -> np.ndarray:
        if isinstance(key, str):
            return self._by_index[self._names[key]]
        if key.index is None or key.index not in self._by_index:
            raise ContractError("tensor is not a leaf of the differentiated tape")
        return self._by_index[key.index]

    def __len__(self) -> int:
        return len(self._by_index)

    def values(self) -> list[np.ndarray]:
        return [self._by_index[i] for i in sorted(self._by_index)]


class Tape:
    """Ordered record of primitive ops.

    Nodes are appended as ops execute, so every node's inputs precede it and a
    single reverse sweep over the list visits each node exactly once.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def variable(self, data: ArrayLike, name: Optional[str] = None) -> Tensor:
        """Register a leaf whose gradient backward() will report."""
        value = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"leaf {name or len(self._nodes)} holds non-finite values")
        self._nodes.append(_Node(parents=(), vjp=None, shape=value.shape, name=name))
        return Tensor(value, tape=self, index=len(self._nodes) - 1)

    def record(self, value: np.ndarray, inputs: Sequence[Tensor], vjp: VJP, op: str) -> Tensor:
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"{op} produced non-finite values")
        parents = tuple(t.index if t.tape is self else None for t in inputs)
        self._nodes.append(_Node(parents=parents, vjp=vjp, shape=value.shape, name=op))
        return Tensor(value, tape=self, index=len(self._nodes) - 1)

    def leaves(self) -> list[int]:
        return [i for i, node in enumerate(self._nodes) if node.is_leaf]

    def backward(self, root: Tensor) -> Gradients:
        """Reverse sweep from a scalar root.

        Args:
            root: Scalar tensor, usually a loss

        Returns:
            Gradients for every leaf; leaves the root does not depend on get zeros

        Raises:
            ContractError: If root is not a scalar or belongs to another tape
            NonFiniteError: If any propagated gradient is non-finite
        """
        if root.size != 1:
            raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
        if root.tape is not None and root.tape is not self:
            raise ContractError("root was recorded on a different tape")

        grads: list[Optional[np.ndarray]] = [None] * len(self._nodes)
        if root.tape is self:
            grads[root.index] = np.ones(root.shape)
            for i in range(root.index, -1, -1):
                upstream = grads[i]
                node = self._nodes[i]
                if upstream is None or node.is_leaf:
                    continue
                for parent, grad in zip(node.parents, node.vjp(upstream)):
                    if parent is None or grad is None:
                        continue
                    if grads[parent] is None:
                        grads[parent] = grad
                    else:
                        grads[parent] = grads[parent] + grad

        result = Gradients()
        for i in self.leaves():
            grad = grads[i]
            if grad is None:
                grad = np.zeros(self._nodes[i].shape)
            elif not np.all(np.isfinite(grad)):
                raise NonFiniteError(f"non-finite gradient for leaf {self._nodes[i].name or i}")
            result._by_index[i] = np.asarray(grad, dtype=np.float64).reshape(self._nodes[i].shape)
            if self._nodes[i].name is not None:
                result._names[self._nodes[i].name] = i
        return result


def backward(tape: Tape, root: Tensor) -> Gradients:
    return tape.backward(root)
