import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, NamedTuple, Optional, Union

import numpy as np

from ..errors import ContractError, InputError
from ..models import LayoutEntry, ParamVector, read_container, write_container

Network = Literal["generator", "discriminator"]


@dataclass(frozen=True, eq=False)
class FisherDiagonal:
    """Per-parameter importance aligned with one network's flat parameter layout.

    Attributes:
        values: Nonnegative, finite, one entry per parameter
        layout: Layer ranges of the parameter vector the values describe
        samples: Number of latent draws averaged (0 for a synthetic baseline)
        seed: Seed of the latent draws
        source_digest: Digest of the checkpoint the estimate was taken from
        network: Which network the values belong to
    """

    values: np.ndarray
    layout: tuple[LayoutEntry, ...]
    samples: int = 0
    seed: int = 0
    source_digest: str = ""
    network: Network = "generator"

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple(LayoutEntry(*e) for e in self.layout))
        expected = sum(e.length for e in self.layout)
        if values.size != expected:
            raise ContractError(f"Fisher has {values.size} entries but the layout covers {expected}")
        if not np.all(np.isfinite(values)):
            raise ContractError("Fisher values must be finite")
        if np.any(values < 0):
            raise ContractError("Fisher values must be nonnegative")

    def __len__(self) -> int:
        return int(self.values.size)

    @classmethod
    def uniform(cls, layout: tuple[LayoutEntry, ...], value: float, source_digest: str = "",
                network: Network = "generator") -> "FisherDiagonal":
        """Equal importance for every parameter; the baseline against estimated F."""
        size = sum(e.length for e in layout)
        return cls(values=np.full(size, float(value)), layout=layout, source_digest=source_digest, network=network)

    def as_uniform(self) -> "FisherDiagonal":
        return FisherDiagonal.uniform(self.layout, float(np.mean(self.values)), self.source_digest, self.network)

    def aligned_with(self, theta: ParamVector) -> bool:
        return self.layout == theta.layout

    def meta(self) -> dict:
        return {
            "kind": "fisher",
            "layout": [[e.layer, e.kind, e.offset, e.length, list(e.shape)] for e in self.layout],
            "samples": self.samples,
            "seed": self.seed,
            "source_digest": self.source_digest,
            "network": self.network,
        }


class LayerFisher(NamedTuple):
    layer: str
    kind: str
    mean: float
    max: float
    fraction_of_total: float


def per_layer_mean(fisher: FisherDiagonal, layout: Optional[tuple[LayoutEntry, ...]] = None) -> list[LayerFisher]:
    """Mean (and max, share of the total) of F over every layer's weights and, separately, its biases."""
    layout = fisher.layout if layout is None else tuple(layout)
    if layout != fisher.layout:
        raise ContractError("layout does not match the Fisher diagonal")
    grand_total = math.fsum(fisher.values)
    rows = []
    for entry in sorted(layout, key=lambda e: (e.kind != "weight", e.offset)):
        chunk = fisher.values[entry.offset:entry.offset + entry.length]
        share = math.fsum(chunk) / grand_total if grand_total > 0 else 0.0
        rows.append(LayerFisher(entry.layer, entry.kind, math.fsum(chunk) / chunk.size, float(chunk.max()), share))
    return rows


def save_fisher(path: Union[str, Path], fisher: FisherDiagonal) -> Path:
    return write_container(path, fisher.meta(), {"FISH": fisher.values})


def load_fisher(path: Union[str, Path]) -> FisherDiagonal:
    meta, arrays = read_container(path)
    if meta.get("kind") != "fisher":
        raise InputError(f"container holds {meta.get('kind')!r}, not a Fisher diagonal")
    return FisherDiagonal(
        values=arrays["FISH"],
        layout=tuple(LayoutEntry(l, k, int(o), int(n), tuple(s)) for l, k, o, n, s in meta["layout"]),
        samples=int(meta["samples"]),
        seed=int(meta["seed"]),
        source_digest=meta["source_digest"],
        network=meta["network"],
    )
