import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from ..errors import ContractError, InputError
from .container import digest_of, pack, read_container, unpack, write_container
from .params import ParamVector
from .spec import MlpSpec


@dataclass(eq=False)
class OptimizerSnapshot:
    """Adam moments for one network, so a resumed run continues bit-exactly."""

    m: np.ndarray
    v: np.ndarray
    t: int


@dataclass(eq=False)
class Checkpoint:
    """Generator and discriminator parameters with provenance."""

    g_spec: MlpSpec
    d_spec: MlpSpec
    theta_g: ParamVector
    theta_d: ParamVector
    config_digest: str
    iteration: int = 0
    seed: int = 0
    stage: str = "pretrain"
    parent_digest: Optional[str] = None
    optimizer_g: Optional[OptimizerSnapshot] = None
    optimizer_d: Optional[OptimizerSnapshot] = None
    rng_state: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.theta_g) != self.g_spec.n_params:
            raise ContractError(f"generator has {len(self.theta_g)} parameters, spec needs {self.g_spec.n_params}")
        if len(self.theta_d) != self.d_spec.n_params:
            raise ContractError(f"discriminator has {len(self.theta_d)} parameters, spec needs {self.d_spec.n_params}")

    @property
    def latent_dim(self) -> int:
        return self.g_spec.input_width

    def meta(self) -> dict[str, Any]:
        return {
            "kind": "checkpoint",
            "g_spec": self.g_spec.model_dump(mode="json"),
            "d_spec": self.d_spec.model_dump(mode="json"),
            "config_digest": self.config_digest,
            "iteration": self.iteration,
            "seed": self.seed,
            "stage": self.stage,
            "parent_digest": self.parent_digest,
            "optimizer_steps": {
                "g": self.optimizer_g.t if self.optimizer_g else None,
                "d": self.optimizer_d.t if self.optimizer_d else None,
            },
            "rng_state": self.rng_state,
        }

    def arrays(self) -> dict[str, np.ndarray]:
        arrays = {"GPAR": self.theta_g.values, "DPAR": self.theta_d.values}
        if self.optimizer_g is not None:
            arrays["GOPM"], arrays["GOPV"] = self.optimizer_g.m, self.optimizer_g.v
        if self.optimizer_d is not None:
            arrays["DOPM"], arrays["DOPV"] = self.optimizer_d.m, self.optimizer_d.v
        return arrays

    def to_bytes(self) -> bytes:
        return pack(self.meta(), self.arrays())

    def digest(self) -> str:
        """Content digest of the parameters and provenance (matches the file digest of a saved checkpoint)."""
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def params_equal(self, other: "Checkpoint") -> bool:
        return (
            np.array_equal(self.theta_g.values, other.theta_g.values)
            and np.array_equal(self.theta_d.values, other.theta_d.values)
        )


def _from_parts(meta: dict[str, Any], arrays: dict[str, np.ndarray]) -> Checkpoint:
    if meta.get("kind") != "checkpoint":
        raise InputError(f"container holds {meta.get('kind')!r}, not a checkpoint")
    g_spec = MlpSpec.model_validate(meta["g_spec"])
    d_spec = MlpSpec.model_validate(meta["d_spec"])
    steps = meta.get("optimizer_steps", {})
    opt_g = OptimizerSnapshot(arrays["GOPM"], arrays["GOPV"], int(steps["g"])) if "GOPM" in arrays else None
    opt_d = OptimizerSnapshot(arrays["DOPM"], arrays["DOPV"], int(steps["d"])) if "DOPM" in arrays else None
    return Checkpoint(
        g_spec=g_spec,
        d_spec=d_spec,
        theta_g=ParamVector.for_spec(g_spec, arrays["GPAR"]),
        theta_d=ParamVector.for_spec(d_spec, arrays["DPAR"]),
        config_digest=meta["config_digest"],
        iteration=int(meta["iteration"]),
        seed=int(meta["seed"]),
        stage=meta.get("stage", "pretrain"),
        parent_digest=meta.get("parent_digest"),
        optimizer_g=opt_g,
        optimizer_d=opt_d,
        rng_state=meta.get("rng_state", {}),
    )


def checkpoint_from_bytes(blob: bytes) -> Checkpoint:
    return _from_parts(*unpack(blob))


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    return write_container(path, checkpoint.meta(), checkpoint.arrays())


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    return _from_parts(*read_container(path))


def config_digest(config: Any) -> str:
    """SHA-256 of a pydantic model (or plain JSON value) in canonical form."""
    if hasattr(config, "model_dump"):
        config = config.model_dump(mode="json")
    return digest_of(config)
