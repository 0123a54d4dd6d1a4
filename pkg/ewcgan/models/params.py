from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..autodiff import Tape, Tensor
from ..errors import ContractError, DimensionError
from .spec import LayoutEntry, MlpSpec


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat parameter vector plus the named ranges its layers occupy."""

    values: np.ndarray
    layout: tuple[LayoutEntry, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        expected = 0
        for entry in self.layout:
            if entry.offset != expected:
                raise ContractError(f"layout gap or overlap at {entry.layer}/{entry.kind}")
            expected += entry.length
        if expected != values.size:
            raise DimensionError(f"layout covers {expected} values but vector has {values.size}")

    @classmethod
    def for_spec(cls, spec: MlpSpec, values: np.ndarray) -> "ParamVector":
        return cls(values=values, layout=spec.layout())

    def __len__(self) -> int:
        return int(self.values.size)

    def unflatten(self) -> dict[tuple[str, str], np.ndarray]:
        return {
            (e.layer, e.kind): self.values[e.offset:e.offset + e.length].reshape(e.shape)
            for e in self.layout
        }

    @classmethod
    def flatten(cls, arrays: dict[tuple[str, str], np.ndarray], layout: tuple[LayoutEntry, ...]) -> "ParamVector":
        return cls(
            values=np.concatenate([np.asarray(arrays[(e.layer, e.kind)], dtype=np.float64).reshape(-1) for e in layout]),
            layout=layout,
        )

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values=values, layout=self.layout)

    def as_tensor(self, tape: Optional[Tape] = None, name: Optional[str] = None) -> Tensor:
        if tape is None:
            return Tensor(self.values)
        return tape.variable(self.values, name=name)

    def aligned_with(self, other: "ParamVector") -> bool:
        return self.layout == other.layout


def init_params(spec: MlpSpec, seed: Union[int, np.random.Generator]) -> ParamVector:
    """Weights ~ N(0, 2 / fan_in), biases zero."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    values = np.zeros(spec.n_params)
    for entry in spec.layout():
        if entry.kind == "weight":
            fan_in = entry.shape[0]
            values[entry.offset:entry.offset + entry.length] = rng.normal(0.0, np.sqrt(2.0 / fan_in), entry.length)
    return ParamVector.for_spec(spec, values)


def layer_slices(theta: ParamVector, kind: str = "weight") -> list[tuple[str, slice]]:
    """Index ranges of each layer's weights (or biases) in forward order."""
    return [(e.layer, slice(e.offset, e.offset + e.length)) for e in theta.layout if e.kind == kind]
