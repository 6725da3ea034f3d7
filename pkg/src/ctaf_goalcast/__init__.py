"""Goal prediction for aircraft at untowered airports, conditioned on CTAF radio calls."""

from .geometry import (
    DEFAULT_AIRPORT,
    INSUFFICIENT,
    OTHER,
    UNKNOWN,
    AirportConfig,
    Depart,
    EnterLeg,
    IntentLabel,
    Landing,
    LocalPosition,
    RunwayEnd,
    Takeoff,
    intent_label_set,
)
from .goalnet import GoalMixture, GoalNet, ModelConfig
from .trainer import TrainConfig, train
from .evaluator import fde_best_of_n, permutation_importance, lofo_study

__version__ = "0.1.0"
