"""Simulation of the decoy-deletion game between a deletion-hunting
adversary and a decoy-injecting challenger."""

from .domain import (
    AdversaryMode,
    ChallengerMode,
    ConfigError,
    GameConfig,
    Metrics,
    Origin,
    Post,
    Scenario,
    ScenarioSpec,
    TrainHyper,
    compute_metrics,
    f_score,
)
from .engine import GameTrace, run_game

__version__ = "0.1.0"
