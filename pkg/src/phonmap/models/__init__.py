from .asr import AsrArch, CnnAsr, asr_forward
from .checkpoint import Checkpoint, file_digest, load_checkpoint, save_checkpoint
from .ptn import Ptn, PtnArch, ptn_forward
from .training import AsrTrainConfig, PtnTrainConfig, TrainResult, train_asr, train_ptn

__all__ = [
    "AsrArch", "AsrTrainConfig", "Checkpoint", "CnnAsr", "Ptn", "PtnArch", "PtnTrainConfig",
    "TrainResult", "asr_forward", "file_digest", "load_checkpoint", "ptn_forward",
    "save_checkpoint", "train_asr", "train_ptn",
]
