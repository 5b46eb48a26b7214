"""Cart-pole with five force levels and three cost channels.

Channel 0 charges the applied force (10 on entering a terminal state),
channel 1 charges pole angles beyond 0.03 rad, channel 2 cart positions
beyond 0.1 m.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEATURE_SCALE = np.array([2.4, 3.0, 0.21, 3.0])


@dataclass(frozen=True)
class CartPoleParams:
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    time_step: float = 0.02
    force_levels: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0)
    episode_length: int = 200
    init_half_width: float = 0.05
    position_limit: float = 2.4
    angle_limit: float = 0.21
    angle_band: float = 0.03
    position_band: float = 0.1
    terminal_cost: float = 10.0
    # charge the band costs on s_{t+1} (default) or on s_t
    constraint_on_successor: bool = True

    def __post_init__(self):
        object.__setattr__(self, "force_levels", tuple(float(f) for f in self.force_levels))
        if self.episode_length < 1:
            raise ValueError("episode_length must be at least 1")
        if min(self.cart_mass, self.pole_mass, self.pole_half_length, self.time_step) <= 0:
            raise ValueError("physical parameters must be positive")


@dataclass
class CartPole:
    """Stateless dynamics plus an owned RNG for initial states.

    States are numpy arrays ``(x, x_dot, omega, omega_dot)``; ``omega = 0``
    is upright.
    """

    params: CartPoleParams = field(default_factory=CartPoleParams)
    seed: int | None = None

    state_dim = 4
    num_constraints = 2

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    @property
    def num_actions(self) -> int:
        return len(self.params.force_levels)

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        w = self.params.init_half_width
        return self._rng.uniform(-w, w, size=4)

    def is_terminal(self, state) -> bool:
        p = self.params
        return bool(abs(state[0]) > p.position_limit or abs(state[2]) > p.angle_limit)

    def accelerations(self, state, force: float) -> tuple[float, float]:
        p = self.params
        _, _, omega, omega_dot = state
        total_mass = p.cart_mass + p.pole_mass
        pml = p.pole_mass * p.pole_half_length
        cos, sin = np.cos(omega), np.sin(omega)
        temp = (force + pml * omega_dot**2 * sin) / total_mass
        omega_acc = (p.gravity * sin - cos * temp) / (
            p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos**2 / total_mass)
        )
        x_acc = temp - pml * omega_acc * cos / total_mass
        return float(x_acc), float(omega_acc)

    def step(self, state, action: int) -> tuple[np.ndarray, bool]:
        """Explicit Euler step. Returns ``(next_state, terminal)``."""
        self._check_action(action)
        state = np.asarray(state, dtype=np.float64)
        if self.is_terminal(state):
            raise ValueError("cannot step from a terminal state")
        x, x_dot, omega, omega_dot = state
        x_acc, omega_acc = self.accelerations(state, self.params.force_levels[action])
        dt = self.params.time_step
        nxt = np.array([
            x + dt * x_dot,
            x_dot + dt * x_acc,
            omega + dt * omega_dot,
            omega_dot + dt * omega_acc,
        ])
        return nxt, self.is_terminal(nxt)

    def primary_cost(self, action: int, next_terminal: bool) -> float:
        if next_terminal:
            return self.params.terminal_cost
        return abs(self.params.force_levels[action])

    def angle_cost(self, state) -> float:
        return 0.0 if abs(state[2]) <= self.params.angle_band else 1.0

    def position_cost(self, state) -> float:
        return 0.0 if abs(state[0]) <= self.params.position_band else 1.0

    def cost_channel(self, v: int, state, action: int, next_state) -> float:
        if v == 0:
            return self.primary_cost(action, self.is_terminal(next_state))
        evaluated = next_state if self.params.constraint_on_successor else state
        if v == 1:
            return self.angle_cost(evaluated)
        if v == 2:
            return self.position_cost(evaluated)
        raise ValueError(f"cart-pole has cost channels 0..2, got {v}")

    def absorbing_cost(self, v: int) -> float:
        """Per-step cost charged by a failed state if it were held forever.

        Used by the absorbing terminal rule: the terminal cost for channel 0,
        a full violation for each constraint channel.
        """
        if v == 0:
            return self.params.terminal_cost
        if v in (1, 2):
            return 1.0
        raise ValueError(f"cart-pole has cost channels 0..2, got {v}")

    def features(self, v: int, state) -> np.ndarray:
        return feature_map(v, state)

    def force(self, action: int) -> float:
        self._check_action(action)
        return self.params.force_levels[action]

    def _check_action(self, action: int) -> None:
        if not 0 <= action < self.num_actions:
            raise ValueError(f"action must lie in [0, {self.num_actions}), got {action}")


def feature_map(channel: int, state) -> np.ndarray:
    """Scaled state shared by every critic: ``state / (2.4, 3.0, 0.21, 3.0)``."""
    if channel < 0:
        raise ValueError(f"channel must be non-negative, got {channel}")
    return np.asarray(state, dtype=np.float64) / FEATURE_SCALE
