from .config import LossVariant, TrainConfig
from .losses import d_loss, g_loss
from .optim import Adam
from .trainer import (
    Regularizer,
    StepRecord,
    TrainRecord,
    TrainState,
    discriminator_step,
    generator_step,
    pretrain,
    train_step,
)
