"""Moment fits and the Fréchet distance between 2-D Gaussians.

All 2x2 square roots use the closed form for a PSD matrix M:
sqrt(M) = (M + s I) / t with s = sqrt(det M) and t = sqrt(tr M + 2 s).
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from ..datasets import GaussianMixtureSpec
from ..errors import InputError, NumericError

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-10
ROUNDOFF = 1e-13
SQRT_ROUNDOFF = 1e-6


@dataclass(frozen=True, eq=False)
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    @property
    def degenerate(self) -> bool:
        eigenvalues = np.linalg.eigvalsh(self.cov)
        return bool(eigenvalues[0] <= PSD_TOLERANCE * max(1.0, float(eigenvalues[-1])))

    @classmethod
    def from_mixture(cls, spec: GaussianMixtureSpec) -> "GaussianFit":
        """Exact first and second moments of a mixture (n = 0 marks an analytic fit)."""
        return cls(mean=spec.mean(), cov=spec.covariance(), n=0)


def fit_gaussian(samples: np.ndarray) -> GaussianFit:
    """Sample mean and unbiased covariance of an n x 2 array."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise InputError(f"expected an n x 2 array, got {samples.shape}")
    n = samples.shape[0]
    if n < 2:
        raise InputError(f"fitting a Gaussian needs at least 2 samples, got {n}")
    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    fit = GaussianFit(mean=mean, cov=cov, n=n)
    if fit.degenerate:
        logger.warning("Degenerate Gaussian fit over %d samples (covariance eigenvalues %s)", n, np.linalg.eigvalsh(cov))
    return fit


def _clamped(value: float, scale: float, what: str) -> float:
    """Zero out round-off below PSD_TOLERANCE relative to scale; reject anything more negative."""
    if value < -PSD_TOLERANCE * max(1.0, scale):
        raise NumericError(f"{what} is negative ({value:.3e}); matrix is not PSD")
    return max(value, 0.0)


def _det_and_trace(m: np.ndarray) -> tuple[float, float]:
    magnitude = float(np.max(np.abs(m)))
    trace = _clamped(float(m[0, 0] + m[1, 1]), magnitude, "trace")
    det = _clamped(float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]), magnitude ** 2, "determinant")
    return det, trace


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    det, trace = _det_and_trace(m)
    s = math.sqrt(det)
    t = math.sqrt(trace + 2.0 * s)
    if t == 0.0:
        return np.zeros((2, 2))
    return (m + s * np.eye(2)) / t


def trace_sqrtm_psd(m: np.ndarray) -> float:
    """tr(sqrt(M)) = sqrt(tr M + 2 sqrt(det M)) for a 2x2 PSD matrix."""
    det, trace = _det_and_trace(m)
    return math.sqrt(trace + 2.0 * math.sqrt(det))


def frechet_distance_squared(a: GaussianFit, b: GaussianFit) -> float:
    root_a = sqrtm_psd(a.cov)
    cross = root_a @ b.cov @ root_a
    cross = 0.5 * (cross + cross.T)
    traces = float(np.trace(a.cov) + np.trace(b.cov))
    value = float(np.sum((a.mean - b.mean) ** 2)) + traces - 2.0 * trace_sqrtm_psd(cross)
    # a rank-deficient cross term keeps only half the digits through the square root
    if value < 0.0 and abs(value) <= SQRT_ROUNDOFF * max(1.0, traces):
        return 0.0
    if abs(value) <= ROUNDOFF * max(1.0, traces):
        return 0.0
    return _clamped(value, traces, "squared Fréchet distance")


def frechet_distance(a: GaussianFit, b: GaussianFit) -> float:
    """2-Wasserstein distance between the two Gaussians.

    Raises:
        NumericError: If a covariance is not PSD beyond tolerance
    """
    return math.sqrt(frechet_distance_squared(a, b))


def frechet_distance_commuting(a: GaussianFit, b: GaussianFit) -> float:
    """Same distance for commuting covariances: ||mu_a - mu_b||^2 + ||sqrt(S_a) - sqrt(S_b)||_F^2."""
    value = float(np.sum((a.mean - b.mean) ** 2)) + float(np.sum((sqrtm_psd(a.cov) - sqrtm_psd(b.cov)) ** 2))
    return math.sqrt(value)
