"""Bounded FIFO experience replay with uniform sampling (with replacement)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TransitionRecord


@dataclass
class Batch:
    features: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    next_features: np.ndarray
    terminal: np.ndarray
    truncated: np.ndarray

    def __len__(self):
        return len(self.actions)


class ReplayBuffer:
    """Ring buffer over preallocated arrays.

    Feature width is fixed by the first pushed record.
    """

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self._size = 0
        self._cursor = 0
        self._features = None

    def __len__(self) -> int:
        return self._size

    def _allocate(self, width: int) -> None:
        n = self.capacity
        self._features = np.empty((n, width))
        self._next_features = np.empty((n, width))
        self._actions = np.empty(n, dtype=np.intp)
        self._costs = np.empty(n)
        self._terminal = np.empty(n, dtype=bool)
        self._truncated = np.empty(n, dtype=bool)

    def push(self, record: TransitionRecord) -> None:
        features = np.asarray(record.features, dtype=np.float64)
        if self._features is None:
            self._allocate(features.size)
        i = self._cursor
        self._features[i] = features
        self._next_features[i] = record.next_features
        self._actions[i] = record.action
        self._costs[i] = record.cost
        self._terminal[i] = record.terminal
        self._truncated[i] = record.truncated
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _record(self, i: int) -> TransitionRecord:
        return TransitionRecord(
            self._features[i].copy(),
            int(self._actions[i]),
            float(self._costs[i]),
            self._next_features[i].copy(),
            bool(self._terminal[i]),
            bool(self._truncated[i]),
        )

    def records(self) -> list[TransitionRecord]:
        """Stored records, oldest first."""
        start = self._cursor if self._size == self.capacity else 0
        return [self._record((start + k) % self.capacity) for k in range(self._size)]

    def _indices(self, m: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        if m < 1:
            raise ValueError(f"minibatch size must be positive, got {m}")
        return rng.integers(0, self._size, size=m)

    def sample(self, m: int, rng: np.random.Generator) -> list[TransitionRecord]:
        return [self._record(i) for i in self._indices(m, rng)]

    def sample_batch(self, m: int, rng: np.random.Generator) -> Batch:
        """Same draw as :meth:`sample`, returned as stacked arrays."""
        idx = self._indices(m, rng)
        return Batch(
            self._features[idx],
            self._actions[idx],
            self._costs[idx],
            self._next_features[idx],
            self._terminal[idx],
            self._truncated[idx],
        )
