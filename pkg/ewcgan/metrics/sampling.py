from dataclasses import dataclass

import numpy as np

from ..datasets import FewShotSet, GaussianMixtureSpec
from ..errors import InputError

DEFAULT_R_SIGMAS = 3.0


def _points(samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise InputError(f"expected an n x 2 array, got {samples.shape}")
    return samples


def random_pairs(n: int, n_pairs: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded distinct index pairs; fixed by (n, n_pairs, seed)."""
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=n_pairs)
    j = rng.integers(0, n - 1, size=n_pairs)
    j = j + (j >= i)
    return i, j


def diversity(samples: np.ndarray, n_pairs: int, seed: int) -> float:
    """Mean Euclidean distance over random distinct pairs of samples."""
    samples = _points(samples)
    if samples.shape[0] < 2:
        raise InputError(f"diversity needs at least 2 samples, got {samples.shape[0]}")
    if n_pairs < 1:
        raise InputError(f"n_pairs must be at least 1, got {n_pairs}")
    i, j = random_pairs(samples.shape[0], n_pairs, seed)
    return float(np.mean(np.linalg.norm(samples[i] - samples[j], axis=1)))


@dataclass(frozen=True, eq=False)
class Coverage:
    coverage: float
    high_quality_fraction: float
    counts: np.ndarray


def mahalanobis_sq(samples: np.ndarray, spec: GaussianMixtureSpec) -> np.ndarray:
    """n x modes matrix of squared Mahalanobis distances to each mode."""
    diff = samples[:, None, :] - spec.centers[None, :, :]
    precisions = np.linalg.inv(spec.covariances)
    return np.einsum("nmi,mij,nmj->nm", diff, precisions, diff)


def mode_coverage(samples: np.ndarray, spec: GaussianMixtureSpec, r_sigmas: float = DEFAULT_R_SIGMAS) -> Coverage:
    """Which modes receive high-quality samples.

    A sample is high quality when its Mahalanobis distance to the nearest
    mode is at most r_sigmas; a mode is covered once it collects at least
    max(1, n / (10 * modes)) of them.
    """
    if not r_sigmas > 0:
        raise InputError(f"r_sigmas must be positive, got {r_sigmas}")
    samples = _points(samples)
    n, modes = samples.shape[0], spec.n_modes
    d2 = mahalanobis_sq(samples, spec)
    nearest = np.argmin(d2, axis=1)
    good = d2[np.arange(n), nearest] <= r_sigmas ** 2
    counts = np.bincount(nearest[good], minlength=modes)
    threshold = max(1.0, n / (10.0 * modes))
    return Coverage(
        coverage=float(np.sum(counts >= threshold)) / modes,
        high_quality_fraction=float(np.mean(good)) if n else 0.0,
        counts=counts,
    )


def default_memorization_radius(spec: GaussianMixtureSpec) -> float:
    """Three standard deviations of the target modes (weighted mean of the major-axis sigma)."""
    sigmas = np.sqrt([np.max(np.linalg.eigvalsh(c.cov)) for c in spec.components])
    return float(3.0 * (spec.weights @ sigmas))


def nearest_distances(samples: np.ndarray, references: np.ndarray) -> np.ndarray:
    diff = samples[:, None, :] - references[None, :, :]
    return np.min(np.linalg.norm(diff, axis=2), axis=1)


def memorization(samples: np.ndarray, fewshot: FewShotSet, eps: float) -> float:
    """Fraction of samples whose nearest few-shot example is within eps."""
    if not eps > 0:
        raise InputError(f"memorization radius must be positive, got {eps}")
    samples = _points(samples)
    if samples.shape[0] == 0:
        return 0.0
    return float(np.mean(nearest_distances(samples, fewshot.samples) <= eps))
