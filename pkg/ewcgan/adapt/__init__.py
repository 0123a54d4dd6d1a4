from .adapter import DriftLog, DriftRecord, adapt, fine_tune_abundant, paired_distance, paired_generate
from .config import DEFAULT_LAMBDA_GRID, AdaptConfig, EwcTarget
from .ewc import WeightChange, ewc_penalty, weight_change_rate
