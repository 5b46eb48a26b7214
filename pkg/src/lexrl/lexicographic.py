"""Lexicographic action selection over a primary critic and ordered constraint critics.

Constraint ``c`` has priority over constraint ``c + 1``. In a given state the
agent filters the action set constraint by constraint
(``A_c = {u in A_{c-1} : Q_c(u) <= K_c}``), stops at the first empty set,
and then minimises either the primary critic over the last fully feasible
set or the first violated constraint's critic over the last non-empty set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .mdp import discount_threshold
from .neural import MlpParameters, forward
from .validation import check_states


@dataclass(frozen=True)
class ConstraintActionSets:
    """Met-constraint count ``v`` and the nested sets ``A_1 .. A_min(v+1, C)``."""

    v: int
    sets: tuple[tuple[int, ...], ...]

    @property
    def feasible(self) -> tuple[int, ...] | None:
        """``A_v``: the deepest non-empty set, or ``None`` when ``v == 0``."""
        return self.sets[self.v - 1] if self.v else None


def action_sets_from_values(
    constraint_values: Sequence[np.ndarray], thresholds: Sequence[float]
) -> ConstraintActionSets:
    """Nested constraint action sets given each constraint critic's Q-values.

    ``constraint_values[c - 1]`` holds ``Q_c(s, .)`` over all actions. A value
    equal to its threshold counts as satisfied.
    """
    if len(constraint_values) != len(thresholds):
        raise ValueError(
            f"{len(constraint_values)} constraint critics but {len(thresholds)} thresholds"
        )
    if not constraint_values:
        return ConstraintActionSets(0, ())
    n_actions = len(constraint_values[0])
    current = np.arange(n_actions)
    sets = []
    for c, (q, k) in enumerate(zip(constraint_values, thresholds), start=1):
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (n_actions,):
            raise ValueError(f"critic {c} returned shape {q.shape}, expected ({n_actions},)")
        current = current[q[current] <= k]
        sets.append(tuple(int(u) for u in current))
        if current.size == 0:
            return ConstraintActionSets(c - 1, tuple(sets))
    return ConstraintActionSets(len(thresholds), tuple(sets))


def select_from_values(
    primary_values: np.ndarray,
    constraint_values: Sequence[np.ndarray],
    thresholds: Sequence[float],
) -> tuple[int, int, ConstraintActionSets]:
    """Returns ``(action, used_channel, action_sets)``. Ties go to the lowest index."""
    primary_values = np.asarray(primary_values, dtype=np.float64)
    sets = action_sets_from_values(constraint_values, thresholds)
    C = len(thresholds)
    candidates = np.arange(len(primary_values)) if sets.v == 0 else np.array(sets.sets[sets.v - 1])
    if sets.v == C:
        channel, values = 0, primary_values
    else:
        channel, values = sets.v + 1, np.asarray(constraint_values[sets.v], dtype=np.float64)
    action = int(candidates[np.argmin(values[candidates])])
    return action, channel, sets


def _as_critic(critic) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(critic, MlpParameters):
        return lambda features: forward(critic, features)
    if hasattr(critic, "predict"):
        return lambda features: np.asarray(critic.predict(np.atleast_2d(features)))[0]
    if callable(critic):
        return critic
    raise TypeError(f"cannot use {type(critic).__name__} as a critic")


def _identity_features(channel: int, state) -> np.ndarray:
    return np.asarray(state, dtype=np.float64)


class LexicographicAgent(BaseEstimator):
    """Greedy lexicographic controller built from frozen critics.

    Parameters
    ----------
    critics : sequence
        ``[Q_0, Q_1, ..., Q_C]``. Each entry is an :class:`MlpParameters`, an
        estimator with ``predict``, or a callable ``features -> Q-values``.
    raw_thresholds : sequence of float
        Per-step violation probabilities ``K̄_1 .. K̄_C``, highest priority first.
    gamma : float
        Discount factor the critics were trained with.
    feature_map : callable, optional
        ``(channel, state) -> features``; identity when omitted.
    thresholds : sequence of float, optional
        Discounted budgets ``K_c`` used as-is, bypassing the conversion from
        ``raw_thresholds``.

    Changing ``raw_thresholds`` and refitting only recomputes the budgets.
    The critics are never retrained.
    """

    def __init__(self, critics=None, raw_thresholds=(), gamma=0.995, feature_map=None, thresholds=None):
        self.critics = critics
        self.raw_thresholds = raw_thresholds
        self.gamma = gamma
        self.feature_map = feature_map
        self.thresholds = thresholds

    def fit(self, X=None, y=None):
        if not self.critics:
            raise ValueError("at least the primary critic Q_0 is required")
        if self.thresholds is not None:
            budgets = tuple(float(k) for k in self.thresholds)
        else:
            budgets = tuple(discount_threshold(k, self.gamma) for k in self.raw_thresholds)
        if len(self.critics) != len(budgets) + 1:
            raise ValueError(
                f"{len(self.critics)} critics need {len(self.critics) - 1} thresholds, "
                f"got {len(budgets)}"
            )
        self.thresholds_ = budgets
        self.critic_fns_ = [_as_critic(c) for c in self.critics]
        self._features = self.feature_map or _identity_features
        return self

    def _check_fitted(self):
        if not hasattr(self, "thresholds_"):
            raise NotFittedError("call fit() before selecting actions")

    def q_values(self, state) -> list[np.ndarray]:
        self._check_fitted()
        return [
            np.asarray(fn(self._features(c, state)), dtype=np.float64)
            for c, fn in enumerate(self.critic_fns_)
        ]

    def constraint_action_sets(self, state) -> ConstraintActionSets:
        q = self.q_values(state)
        return action_sets_from_values(q[1:], self.thresholds_)

    def select_action(self, state) -> tuple[int, int]:
        """``(action, used_channel)`` for a single state."""
        q = self.q_values(state)
        action, channel, _ = select_from_values(q[0], q[1:], self.thresholds_)
        return action, channel

    def predict(self, X) -> np.ndarray:
        """Greedy lexicographic action for each row of ``X``."""
        X = check_states(X)
        return np.array([self.select_action(s)[0] for s in X], dtype=np.intp)

    def used_channels(self, X) -> np.ndarray:
        X = check_states(X)
        return np.array([self.select_action(s)[1] for s in X], dtype=np.intp)


def make_agent(raw_thresholds, gamma, critics, feature_map=None) -> LexicographicAgent:
    """Bind frozen critics to a new set of thresholds. No training happens here."""
    return LexicographicAgent(critics, tuple(raw_thresholds), gamma, feature_map).fit()
