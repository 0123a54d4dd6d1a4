from typing import Callable, Union

import numpy as np

from ..errors import ContractError
from .tape import Tape, Tensor


def grad_check(
    f: Callable[[Tensor], Tensor],
    theta: Union[np.ndarray, "ParamVector"],  # noqa: F821
    h: float = 1e-5,
) -> float:
    """Compare reverse-mode gradients of f against central differences.

    Args:
        f: Maps a 1-D parameter tensor to a scalar tensor
        theta: Point to check at (a ParamVector or flat array)
        h: Finite-difference step

    Returns:
        max_i |analytic_i - numeric_i| / max(1, |numeric_i|)

    Raises:
        ContractError: If h is not strictly positive
    """
    if not h > 0:
        raise ContractError(f"finite-difference step must be positive, got {h}")
    point = np.array(getattr(theta, "values", theta), dtype=np.float64).reshape(-1)

    tape = Tape()
    leaf = tape.variable(point, name="theta")
    analytic = tape.backward(f(leaf))[leaf]

    numeric = np.empty_like(point)
    for i in range(point.size):
        up, down = point.copy(), point.copy()
        up[i] += h
        down[i] -= h
        numeric[i] = (f(Tensor(up)).item() - f(Tensor(down)).item()) / (2.0 * h)

    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
