from .checkpoint import (
    Checkpoint,
    OptimizerSnapshot,
    checkpoint_from_bytes,
    config_digest,
    load_checkpoint,
    save_checkpoint,
)
from .container import file_digest, read_container, write_container
from .network import discriminate, forward, generate, generate_samples, sample_latent
from .params import ParamVector, init_params, layer_slices
from .spec import LayoutEntry, MlpSpec, discriminator_spec, generator_spec
