from .gaussian import (
    GaussianFit,
    fit_gaussian,
    frechet_distance,
    frechet_distance_commuting,
    frechet_distance_squared,
    sqrtm_psd,
)
from .report import EvalConfig, MetricsReport, evaluate_checkpoint, evaluate_samples
from .sampling import (
    Coverage,
    default_memorization_radius,
    diversity,
    memorization,
    mode_coverage,
    random_pairs,
)
