import math
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ..errors import InputError
from ..models.container import digest_of

WEIGHT_TOLERANCE = 1e-9


def check_spd(cov: np.ndarray) -> None:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (2, 2):
        raise ValueError(f"covariance must be 2x2, got {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    if np.min(np.linalg.eigvalsh(cov)) <= 0:
        raise ValueError("covariance must be positive-definite")


class MixtureComponent(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: tuple[float, float]
    covariance: tuple[tuple[float, float], tuple[float, float]]
    weight: float

    @field_validator("covariance")
    @classmethod
    def _spd(cls, cov):
        check_spd(np.array(cov))
        return cov

    @field_validator("weight")
    @classmethod
    def _positive(cls, weight: float) -> float:
        if not weight > 0:
            raise ValueError(f"component weight must be positive, got {weight}")
        return weight

    @property
    def mean(self) -> np.ndarray:
        return np.array(self.center, dtype=np.float64)

    @property
    def cov(self) -> np.ndarray:
        return np.array(self.covariance, dtype=np.float64)


class GaussianMixtureSpec(BaseModel):
    """Weighted mixture of 2-D Gaussians."""

    model_config = ConfigDict(frozen=True)

    components: tuple[MixtureComponent, ...]
    name: str = "mixture"

    @model_validator(mode="after")
    def _weights_sum_to_one(self):
        if not self.components:
            raise ValueError("a mixture needs at least one component")
        total = math.fsum(c.weight for c in self.components)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"component weights sum to {total}, not 1")
        return self

    @property
    def n_modes(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.components], dtype=np.float64)

    @property
    def covariances(self) -> np.ndarray:
        return np.array([c.covariance for c in self.components], dtype=np.float64)

    def mean(self) -> np.ndarray:
        return self.weights @ self.centers

    def covariance(self) -> np.ndarray:
        """Exact covariance of the mixture (within-mode plus between-mode spread)."""
        mu = self.mean()
        second = sum(c.weight * (c.cov + np.outer(c.mean, c.mean)) for c in self.components)
        return second - np.outer(mu, mu)

    def digest(self) -> str:
        return digest_of(self.model_dump(mode="json"))


class TargetTransform(BaseModel):
    """Rotation, scale and shift applied to a source mixture to build a target."""

    model_config = ConfigDict(frozen=True)

    rotation: float = 0.0
    scale: float = 1.0
    translation: tuple[float, float] = (0.0, 0.0)
    mode_mask: Optional[tuple[bool, ...]] = None
    covariance_multiplier: float = 1.0

    @field_validator("scale", "covariance_multiplier")
    @classmethod
    def _positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    def magnitude_label(self) -> str:
        parts = []
        if self.translation != (0.0, 0.0):
            parts.append(f"shift({self.translation[0]:g},{self.translation[1]:g})")
        if self.rotation:
            parts.append(f"rot({self.rotation:.4g})")
        if self.scale != 1.0:
            parts.append(f"scale({self.scale:g})")
        if self.covariance_multiplier != 1.0:
            parts.append(f"cov x{self.covariance_multiplier:g}")
        if self.mode_mask is not None:
            parts.append(f"modes {sum(self.mode_mask)}/{len(self.mode_mask)}")
        return " + ".join(parts) or "identity"


def ring_spec(n_modes: int, radius: float, sigma: float) -> GaussianMixtureSpec:
    """Equal-weight isotropic modes at angles 2*pi*i/n on a circle."""
    if n_modes < 1:
        raise InputError(f"ring needs at least one mode, got {n_modes}")
    if radius < 0 or not sigma > 0:
        raise InputError(f"ring needs radius >= 0 and sigma > 0, got radius={radius}, sigma={sigma}")
    var = sigma * sigma
    components = []
    for i in range(n_modes):
        angle = 2.0 * math.pi * i / n_modes
        components.append(MixtureComponent(
            center=(radius * math.cos(angle), radius * math.sin(angle)),
            covariance=((var, 0.0), (0.0, var)),
            weight=1.0 / n_modes,
        ))
    return GaussianMixtureSpec(components=tuple(components), name=f"ring{n_modes}")


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def apply_transform(spec: GaussianMixtureSpec, t: TargetTransform) -> GaussianMixtureSpec:
    """Move every kept mode by x -> scale * R x + translation.

    Covariances become multiplier * scale^2 * R S R^T; masked-out modes are
    dropped and the remaining weights renormalized.

    Raises:
        InputError: If the mask length is wrong or keeps no mode
    """
    mask = t.mode_mask if t.mode_mask is not None else (True,) * spec.n_modes
    if len(mask) != spec.n_modes:
        raise InputError(f"mode mask has {len(mask)} entries for {spec.n_modes} modes")
    if not any(mask):
        raise InputError("mode mask removes every mode")

    rot = _rotation(t.rotation)
    shift = np.array(t.translation, dtype=np.float64)
    kept = [c for c, keep in zip(spec.components, mask) if keep]
    total = math.fsum(c.weight for c in kept)
    components = []
    for c in kept:
        center = t.scale * (rot @ c.mean) + shift
        cov = t.covariance_multiplier * t.scale ** 2 * (rot @ c.cov @ rot.T)
        cov = 0.5 * (cov + cov.T)
        components.append(MixtureComponent(
            center=(float(center[0]), float(center[1])),
            covariance=((float(cov[0, 0]), float(cov[0, 1])), (float(cov[1, 0]), float(cov[1, 1]))),
            weight=c.weight / total,
        ))
    label = t.magnitude_label()
    name = spec.name if label == "identity" else f"{spec.name}|{label}"
    return GaussianMixtureSpec(components=tuple(components), name=name)


def sample_labeled(spec: GaussianMixtureSpec, n: int, seed: Union[int, np.random.Generator]) -> tuple[np.ndarray, np.ndarray]:
    """Draw n points and the index of the component each came from.

    Component first (by weight), then a Gaussian draw through the Cholesky
    factor of that component's covariance.
    """
    if n < 1:
        raise InputError(f"sample size must be at least 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    labels = rng.choice(spec.n_modes, size=n, p=spec.weights)
    noise = rng.standard_normal((n, 2))
    chol = np.array([np.linalg.cholesky(c.cov) for c in spec.components])
    points = spec.centers[labels] + np.einsum("nij,nj->ni", chol[labels], noise)
    return points, labels


def sample(spec: GaussianMixtureSpec, n: int, seed: Union[int, np.random.Generator]) -> np.ndarray:
    return sample_labeled(spec, n, seed)[0]


def default_target_ladder() -> list[TargetTransform]:
    """Targets of increasing distance from the source ring."""
    return [
        TargetTransform(translation=(0.25, 0.0)),
        TargetTransform(rotation=math.pi / 8, scale=1.2),
        TargetTransform(scale=2.0, covariance_multiplier=4.0),
        TargetTransform(translation=(6.0, 0.0)),
    ]


def shifted_ring_transform() -> TargetTransform:
    return TargetTransform(translation=(0.5, 0.5))
