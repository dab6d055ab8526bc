from .checkpoint import CheckpointError, load_checkpoint, read_metadata, save_checkpoint
from .config import LMConfig
from .generate import ar_generate, ar_generate_many, nar_generate, sample_next
from .model import (
    ARModel,
    ARSequence,
    NARExample,
    NARModel,
    TrainingFault,
    ar_loss,
    collate_ar,
    collate_nar,
    nar_loss,
)
from .train import (
    ConstantLR,
    InverseSqrtWarmup,
    TrainConfig,
    TrainState,
    make_ar_examples,
    make_nar_examples,
    train_ar,
    train_nar,
)
