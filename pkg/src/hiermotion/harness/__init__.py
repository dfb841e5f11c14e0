from .checkpoint import Checkpoint, Corrupt, VersionMismatch, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig

__all__ = [
    "Checkpoint",
    "Corrupt",
    "VersionMismatch",
    "load_checkpoint",
    "save_checkpoint",
    "ConfigError",
    "ExperimentConfig",
]
