"""Training strategies sharing one experience loop and evaluator."""

from .base import ExperienceSummary, JsonlLog, StepReport, Strategy, accuracy, plateaued
from .buffer import ReplayBuffer
from .config import TrainConfig
from .core import LookaheadResult, cosine, lookahead_gradient, output_distance, regularized_gradient, regularizer
from .partial_hn import PartialHN
from .replay import LatentReplay, Naive

STRATEGIES = {cls.name: cls for cls in (PartialHN, LatentReplay, Naive)}

__all__ = [
    "STRATEGIES",
    "ExperienceSummary",
    "JsonlLog",
    "LatentReplay",
    "LookaheadResult",
    "Naive",
    "PartialHN",
    "ReplayBuffer",
    "StepReport",
    "Strategy",
    "TrainConfig",
    "accuracy",
    "cosine",
    "lookahead_gradient",
    "output_distance",
    "plateaued",
    "regularized_gradient",
    "regularizer",
]
