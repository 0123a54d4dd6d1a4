import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, as_tensor, ops
from ..errors import ContractError
from ..fisher import FisherDiagonal
from ..models import ParamVector, layer_slices
from ..models.network import Params


def ewc_penalty(theta: Params, theta_s: ParamVector, fisher: FisherDiagonal) -> Tensor:
    """Sum_i F_i (theta_i - theta_S,i)^2, differentiable in theta. The caller applies lambda.

    Raises:
        ContractError: If theta, theta_s and F do not share a layout
    """
    if not fisher.aligned_with(theta_s):
        raise ContractError("Fisher diagonal and anchor parameters have different layouts")
    if isinstance(theta, ParamVector):
        if not theta.aligned_with(theta_s):
            raise ContractError("parameters and anchor parameters have different layouts")
        theta = Tensor(theta.values)
    theta = as_tensor(theta)
    if theta.shape != theta_s.values.shape:
        raise ContractError(f"parameter vector of shape {theta.shape} does not match anchor of length {len(theta_s)}")
    return ops.total(ops.mul(Tensor(fisher.values), ops.square(ops.sub(theta, theta_s.values))))


@dataclass(frozen=True)
class WeightChange:
    """Mean relative drift |theta' - theta| / max(|theta|, eps).

    overall and per_layer cover weights only; biases are reported separately.
    """

    overall: float
    per_layer: dict[str, float] = field(default_factory=dict)
    bias_overall: float = 0.0
    bias_per_layer: dict[str, float] = field(default_factory=dict)


def _relative_change(theta: np.ndarray, theta_prime: np.ndarray, eps: float) -> np.ndarray:
    return np.abs(theta_prime - theta) / np.maximum(np.abs(theta), eps)


def weight_change_rate(theta: ParamVector, theta_prime: ParamVector, eps: float = 1e-8) -> WeightChange:
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    if not theta.aligned_with(theta_prime):
        raise ContractError("weight change needs two parameter vectors with the same layout")
    rate = _relative_change(theta.values, theta_prime.values, eps)

    def summarize(kind: str) -> tuple[float, dict[str, float]]:
        slices = layer_slices(theta, kind)
        per_layer = {name: math.fsum(rate[s]) / (s.stop - s.start) for name, s in slices}
        count = sum(s.stop - s.start for _, s in slices)
        overall = math.fsum(math.fsum(rate[s]) for _, s in slices) / count if count else 0.0
        return overall, per_layer

    overall, per_layer = summarize("weight")
    bias_overall, bias_per_layer = summarize("bias")
    return WeightChange(overall, per_layer, bias_overall, bias_per_layer)
