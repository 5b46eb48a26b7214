"""Lexicographic deep Q-learning for chance-constrained control."""

from .cartpole import CartPole, CartPoleParams
from .lexicographic import LexicographicAgent, make_agent
from .mdp import ProblemSpec, TransitionRecord, discount_threshold
from .neural import MlpParameters, NetworkArchitecture
from .oracle import TabularMdp
from .training import DQNCritic, TrainerConfig

__all__ = [
    "CartPole",
    "CartPoleParams",
    "DQNCritic",
    "LexicographicAgent",
    "MlpParameters",
    "NetworkArchitecture",
    "ProblemSpec",
    "TabularMdp",
    "TrainerConfig",
    "TransitionRecord",
    "discount_threshold",
    "make_agent",
]

__version__ = "0.1.0"
