"""Penalty-based BCD optimisation of STAR-RIS coefficients across the eight
mode/phase models, with a downlink sum-rate case study, brute-force
oracles and an experiment CLI."""

__version__ = "0.1.0"

from .numerics import PhaseGrid
from .scenario import ChannelSet, ScenarioSpec, build_channels, trial_rngs
from .solver import PenaltySchedule, SolveReport, solve
from .star_mode import AuxState, Mode, StarConfig, project_p1

__all__ = [
    "AuxState",
    "ChannelSet",
    "Mode",
    "PenaltySchedule",
    "PhaseGrid",
    "ScenarioSpec",
    "SolveReport",
    "StarConfig",
    "build_channels",
    "project_p1",
    "solve",
    "trial_rngs",
]
