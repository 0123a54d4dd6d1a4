from typing import Union

import numpy as np

from ..autodiff import Tensor, as_tensor, ops
from ..errors import ContractError, DimensionError
from .params import ParamVector
from .spec import MlpSpec

Params = Union[ParamVector, Tensor, np.ndarray]


def _params_tensor(spec: MlpSpec, theta: Params) -> Tensor:
    if isinstance(theta, ParamVector):
        if theta.layout != spec.layout():
            raise ContractError("parameter layout does not match the network spec")
        return Tensor(theta.values)
    theta = as_tensor(theta)
    if theta.shape != (spec.n_params,):
        raise DimensionError(f"expected {spec.n_params} parameters, got shape {theta.shape}")
    return theta


def forward(spec: MlpSpec, theta: Params, x: Union[Tensor, np.ndarray]) -> Tensor:
    """Run the MLP on a batch; differentiable w.r.t. both theta and x."""
    theta = _params_tensor(spec, theta)
    h = as_tensor(x)
    if h.data.ndim != 2 or h.shape[1] != spec.input_width:
        raise DimensionError(f"input batch {h.shape} does not match input width {spec.input_width}")
    layout = spec.layout()
    for i in range(spec.n_layers):
        w, b = layout[2 * i], layout[2 * i + 1]
        h = ops.add_bias(ops.matmul(h, ops.take(theta, w.offset, w.length, w.shape)), ops.take(theta, b.offset, b.length, b.shape))
        if i < spec.n_layers - 1:
            h = ops.leaky_relu(h, spec.alpha)
    return h


def generate(spec_g: MlpSpec, theta_g: Params, z: Union[Tensor, np.ndarray]) -> Tensor:
    return forward(spec_g, theta_g, z)


def discriminate(spec_d: MlpSpec, theta_d: Params, x: Union[Tensor, np.ndarray]) -> Tensor:
    """Raw logits, one per row of x."""
    out = forward(spec_d, theta_d, x)
    return ops.reshape(out, (out.shape[0],))


def sample_latent(rng: np.random.Generator, n: int, latent_dim: int) -> np.ndarray:
    return rng.standard_normal((n, latent_dim))


def generate_samples(spec_g: MlpSpec, theta_g: Params, n: int, rng: np.random.Generator) -> np.ndarray:
    """Evaluation-only helper: n generator outputs as a plain array."""
    return generate(spec_g, theta_g, sample_latent(rng, n, spec_g.input_width)).data
