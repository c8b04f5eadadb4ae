"""Frequency-aware few-shot segmentation across imaging domains, on numpy."""
from .config import TrainConfig
from .errors import (ConfigError, ContractError, DomainError, EmptyForeground, FreqmatchError,
                     ParseError, TrainingError, UnsupportedVersion, ZeroPrototype)
from .model import FewShotSegmenter

__all__ = ["FewShotSegmenter", "TrainConfig", "ConfigError", "ContractError", "DomainError", "EmptyForeground",
           "FreqmatchError", "ParseError", "TrainingError", "UnsupportedVersion", "ZeroPrototype"]
