from .fewshot import FewShotSet, draw_few_shot
from .io import dump_mixture_spec, export_samples_csv, load_mixture_spec
from .mixture import (
    GaussianMixtureSpec,
    MixtureComponent,
    TargetTransform,
    apply_transform,
    default_target_ladder,
    ring_spec,
    sample,
    sample_labeled,
    shifted_ring_transform,
)
