"""Shared pieces for constrained MDPs: transitions, discounting, thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")


def discount_threshold(raw_threshold: float, gamma: float) -> float:
    """Turn a per-step violation probability into a discounted-cost budget.

    A discounted sum of indicator costs approximates the undiscounted
    fraction of violating steps scaled by ``1 / (1 - gamma)``.

    >>> round(discount_threshold(0.05, 0.995), 12)
    10.0
    """
    _check_gamma(gamma)
    if raw_threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {raw_threshold}")
    return raw_threshold / (1.0 - gamma)


def discounted_return(costs: Sequence[float], gamma: float) -> float:
    _check_gamma(gamma)
    total = 0.0
    weight = 1.0
    for c in costs:
        if not math.isfinite(c):
            raise ValueError(f"non-finite cost {c}")
        total += weight * c
        weight *= gamma
    return total


@dataclass(frozen=True)
class TransitionRecord:
    """One experience tuple. ``truncated`` marks a horizon cut, not a real terminal."""

    features: np.ndarray
    action: int
    cost: float
    next_features: np.ndarray
    terminal: bool = False
    truncated: bool = False

    def __post_init__(self):
        if not self.cost >= 0:
            raise ValueError(f"one-step costs must be non-negative, got {self.cost}")
        if self.action < 0:
            raise ValueError(f"invalid action index {self.action}")


@dataclass(frozen=True)
class ProblemSpec:
    gamma: float
    raw_thresholds: tuple[float, ...] = ()

    def __post_init__(self):
        _check_gamma(self.gamma)
        object.__setattr__(self, "raw_thresholds", tuple(float(k) for k in self.raw_thresholds))

    @property
    def num_constraints(self) -> int:
        return len(self.raw_thresholds)

    @property
    def thresholds(self) -> tuple[float, ...]:
        return tuple(discount_threshold(k, self.gamma) for k in self.raw_thresholds)


class Environment(Protocol):
    """What trainers and evaluators need from an environment.

    Channel 0 is the primary cost, channels ``1..num_constraints`` the
    constraint costs. Costs are finite and non-negative.
    """

    state_dim: int
    num_actions: int
    num_constraints: int

    def reset(self, seed=None) -> np.ndarray: ...

    def step(self, state: np.ndarray, action: int) -> tuple[np.ndarray, bool]: ...

    def cost_channel(self, v: int, state: np.ndarray, action: int, next_state: np.ndarray) -> float: ...

    def features(self, v: int, state: np.ndarray) -> np.ndarray: ...
