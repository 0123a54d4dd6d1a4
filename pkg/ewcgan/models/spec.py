from typing import Literal, NamedTuple

from pydantic import BaseModel, ConfigDict, field_validator

from ..autodiff.ops import DEFAULT_LEAK


class LayoutEntry(NamedTuple):
    layer: str
    kind: Literal["weight", "bias"]
    offset: int
    length: int
    shape: tuple[int, ...]


class MlpSpec(BaseModel):
    """Fully connected network: linear layers with leaky ReLU between them.

    The output layer has no activation, so a generator emits unbounded
    points and a discriminator emits a raw logit.
    """

    model_config = ConfigDict(frozen=True)

    layer_widths: tuple[int, ...]
    alpha: float = DEFAULT_LEAK
    role: Literal["generator", "discriminator"] = "generator"

    @field_validator("layer_widths")
    @classmethod
    def _check_widths(cls, widths: tuple[int, ...]) -> tuple[int, ...]:
        if len(widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        if any(w <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive, got {list(widths)}")
        return widths

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def layout(self) -> tuple[LayoutEntry, ...]:
        """Per-layer (weight, bias) ranges of the flat parameter vector, in forward order."""
        entries = []
        offset = 0
        for i, (w_in, w_out) in enumerate(zip(self.layer_widths[:-1], self.layer_widths[1:])):
            name = f"layer_{i}"
            entries.append(LayoutEntry(name, "weight", offset, w_in * w_out, (w_in, w_out)))
            offset += w_in * w_out
            entries.append(LayoutEntry(name, "bias", offset, w_out, (w_out,)))
            offset += w_out
        return tuple(entries)

    @property
    def n_params(self) -> int:
        return sum(w_in * w_out + w_out for w_in, w_out in zip(self.layer_widths[:-1], self.layer_widths[1:]))


def generator_spec(latent_dim: int = 4, hidden: tuple[int, ...] = (64, 64), alpha: float = DEFAULT_LEAK) -> MlpSpec:
    return MlpSpec(layer_widths=(latent_dim, *hidden, 2), alpha=alpha, role="generator")


def discriminator_spec(hidden: tuple[int, ...] = (64, 64), alpha: float = DEFAULT_LEAK) -> MlpSpec:
    return MlpSpec(layer_widths=(2, *hidden, 1), alpha=alpha, role="discriminator")
