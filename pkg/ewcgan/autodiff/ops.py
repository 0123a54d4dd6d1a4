"""Differentiable primitives over float64 arrays.

Every op takes Tensors (or anything numpy can turn into an array), computes
the forward value with numpy and, when at least one input lives on a tape,
records a vector-Jacobian product for the reverse sweep.
"""
from typing import Optional, Sequence

import numpy as np

from ..errors import ContractError, DimensionError, InputError, NonFiniteError
from .tape import VJP, ArrayLike, Tape, Tensor, as_tensor

DEFAULT_LEAK = 0.2


def _tape_of(inputs: Sequence[Tensor]) -> Optional[Tape]:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise ContractError("inputs are recorded on different tapes")
    return tape


def _emit(value: np.ndarray, inputs: Sequence[Tensor], vjp: VJP, op: str) -> Tensor:
    tape = _tape_of(inputs)
    if tape is None:
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"{op} produced non-finite values")
        return Tensor(value)
    return tape.record(value, inputs, vjp, op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.sum(grad).reshape(shape)


def _check_elementwise(op: str, a: Tensor, b: Tensor) -> None:
    # Same shape, or one side is a single-element scalar.
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    av, bv = a.data, b.data
    return _emit(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("mul", a, b)
    av, bv = a.data, b.data
    return _emit(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        "mul",
    )


def add_bias(x: ArrayLike, bias: ArrayLike) -> Tensor:
    """Add a bias row to every row of a batch."""
    x, bias = as_tensor(x), as_tensor(bias)
    if x.data.ndim != 2 or bias.data.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise DimensionError(f"add_bias: cannot broadcast bias {bias.shape} over batch {x.shape}")
    return _emit(x.data + bias.data, (x, bias), lambda g: (g, g.sum(axis=0)), "add_bias")


def leaky_relu(x: ArrayLike, alpha: float = DEFAULT_LEAK) -> Tensor:
    x = as_tensor(x)
    slope = np.where(x.data > 0, 1.0, alpha)
    return _emit(x.data * slope, (x,), lambda g: (g * slope,), "leaky_relu")


def tanh(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _emit(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def stable_sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = stable_sigmoid(x.data)
    return _emit(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def square(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    xv = x.data
    return _emit(xv * xv, (x,), lambda g: (2.0 * g * xv,), "square")


def scale(x: ArrayLike, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return _emit(c * x.data, (x,), lambda g: (c * g,), "scale")


def total(x: ArrayLike) -> Tensor:
    """Sum of all entries, as a scalar."""
    x = as_tensor(x)
    shape = x.shape
    return _emit(np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    shape, n = x.shape, x.size
    return _emit(np.mean(x.data), (x,), lambda g: (np.full(shape, float(g) / n),), "mean")


def reshape(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    original = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as e:
        raise DimensionError(f"cannot reshape {original} to {tuple(shape)}") from e
    return _emit(out, (x,), lambda g: (g.reshape(original),), "reshape")


def take(flat: ArrayLike, offset: int, length: int, shape: Sequence[int]) -> Tensor:
    """View a contiguous range of a flat vector as an array of the given shape."""
    flat = as_tensor(flat)
    if flat.data.ndim != 1 or offset < 0 or offset + length > flat.size:
        raise DimensionError(f"take: range [{offset}, {offset + length}) outside vector of size {flat.size}")
    if int(np.prod(shape)) != length:
        raise DimensionError(f"take: shape {tuple(shape)} does not hold {length} values")
    size = flat.size

    def vjp(g: np.ndarray):
        full = np.zeros(size)
        full[offset:offset + length] = g.reshape(-1)
        return (full,)

    return _emit(flat.data[offset:offset + length].reshape(tuple(shape)), (flat,), vjp, "take")


def bce_with_logits(logits: ArrayLike, labels: ArrayLike) -> Tensor:
    """Mean binary cross-entropy of raw logits against 0/1 labels.

    Uses max(l, 0) - l*y + log(1 + exp(-|l|)) so large logits never overflow.

    Raises:
        InputError: If a label is not exactly 0 or 1, or the batch is empty
        DimensionError: If labels and logits disagree in shape
    """
    logits = as_tensor(logits)
    y = np.asarray(labels.data if isinstance(labels, Tensor) else labels, dtype=np.float64)
    if y.ndim == 0:
        y = np.full(logits.shape, float(y))
    if y.shape != logits.shape:
        raise DimensionError(f"bce_with_logits: labels {y.shape} vs logits {logits.shape}")
    if logits.size == 0:
        raise InputError("bce_with_logits on an empty batch")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise InputError("bce_with_logits labels must be 0 or 1")
    lv = logits.data
    n = lv.size
    losses = np.maximum(lv, 0.0) - lv * y + np.log1p(np.exp(-np.abs(lv)))
    probs = stable_sigmoid(lv)
    return _emit(np.mean(losses), (logits,), lambda g: (float(g) * (probs - y) / n,), "bce_with_logits")


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "add_bias": add_bias,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "square": square,
    "scale": scale,
}


def elementwise(op: str, *inputs: ArrayLike, **params: float) -> Tensor:
    """Dispatch an elementwise op by name, e.g. elementwise("leaky_relu", x, alpha=0.1)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise InputError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    return fn(*inputs, **params)
