"""Offline critic training: epsilon-greedy DQN / Double-DQN on cost minimisation.

Each cost channel gets its own critic, trained separately on the full action
set. A scalarised (Lagrangian) critic is the same loop with a weighted sum
of channels as its one-step cost.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import neural
from .lexicographic import action_sets_from_values
from .mdp import TransitionRecord
from .neural import MlpParameters, NetworkArchitecture, ScheduleConfig
from .replay import Batch, ReplayBuffer
from .validation import check_states

log = logging.getLogger(__name__)

PRIMARY_HIDDEN = (64, 16)
CONSTRAINT_HIDDEN = (64, 64)


def default_hidden(channel: int) -> tuple[int, ...]:
    return PRIMARY_HIDDEN if channel == 0 else CONSTRAINT_HIDDEN


@dataclass(frozen=True)
class TrainerConfig:
    episodes: int = 400
    steps_per_episode: int = 200
    replay_period: int = 1
    tau: float = 0.1
    gamma: float = 0.995
    schedules: ScheduleConfig = field(default_factory=ScheduleConfig)
    target_rule: str = "double_dqn"
    seed: int = 0
    buffer_capacity: int = 100_000
    minibatch_size: int = 64
    learning_starts: int = 64
    optimizer: str = "adam"
    # lower bound applied to bootstrapped values; costs are non-negative so 0 is safe
    value_floor: float | None = 0.0
    # start a fresh initial state inside the episode after a terminal transition
    restart_on_terminal: bool = True
    exploration: str = "independent"
    # "zero": a terminal target is the last cost alone. "absorbing": the failed
    # state keeps charging the environment's absorbing cost on every later step.
    terminal_rule: str = "absorbing"

    def __post_init__(self):
        if self.replay_period < 1:
            raise ValueError("replay_period must be at least 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.target_rule not in ("dqn", "double_dqn"):
            raise ValueError(f"target_rule must be 'dqn' or 'double_dqn', got {self.target_rule!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.exploration not in ("independent", "hierarchical"):
            raise ValueError(f"exploration must be 'independent' or 'hierarchical', got {self.exploration!r}")
        if self.terminal_rule not in ("zero", "absorbing"):
            raise ValueError(f"terminal_rule must be 'zero' or 'absorbing', got {self.terminal_rule!r}")
        if self.episodes < 0 or self.steps_per_episode < 1 or self.minibatch_size < 1:
            raise ValueError("episodes must be >= 0, steps_per_episode and minibatch_size >= 1")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def epsilon_greedy(q_values, epsilon: float, rng: np.random.Generator, allowed=None) -> int:
    """Random action with probability ``epsilon``, else the lowest-index argmin.

    ``allowed`` optionally restricts both branches to a subset of actions.
    """
    q = np.asarray(q_values, dtype=np.float64)
    if q.size == 0:
        raise ValueError("no actions to choose from")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    candidates = np.arange(q.size) if allowed is None else np.asarray(allowed, dtype=np.intp)
    if rng.random() < epsilon:
        return int(candidates[rng.integers(candidates.size)])
    return int(candidates[np.argmin(q[candidates])])


def absorbing_tail(per_step_cost: float, gamma: float) -> float:
    """Discounted cost of staying in a failed state from the next step onward."""
    return gamma * per_step_cost / (1.0 - gamma)


def _bootstrap(record: TransitionRecord, value: float, gamma: float, value_floor) -> float:
    if record.terminal:
        return float(record.cost)
    if value_floor is not None:
        value = max(value, value_floor)
    return float(record.cost + gamma * value)


def dqn_target(record: TransitionRecord, target_params, gamma: float, value_floor=None) -> float:
    """``r`` at a terminal state, else ``r + gamma * min_u Q_target(next, u)``.

    Truncated (horizon-cut) records are not terminal and bootstrap normally.
    """
    if record.terminal:
        return float(record.cost)
    q = _evaluate(target_params, record.next_features)
    return _bootstrap(record, float(np.min(q)), gamma, value_floor)


def double_dqn_target(record: TransitionRecord, online_params, target_params, gamma: float, value_floor=None) -> float:
    """The online critic picks the next action, the target critic scores it."""
    if record.terminal:
        return float(record.cost)
    best = int(np.argmin(_evaluate(online_params, record.next_features)))
    value = float(_evaluate(target_params, record.next_features)[best])
    return _bootstrap(record, value, gamma, value_floor)


def _evaluate(params, features) -> np.ndarray:
    if isinstance(params, MlpParameters):
        return neural.forward(params, features)
    return np.asarray(params(features), dtype=np.float64)


def batch_targets(batch: Batch, online: MlpParameters, target: MlpParameters, config: TrainerConfig) -> np.ndarray:
    """Vectorised :func:`dqn_target` / :func:`double_dqn_target` over a minibatch."""
    q_target = neural.forward(target, batch.next_features)
    rows = np.arange(len(batch))
    if config.target_rule == "double_dqn":
        best = np.argmin(neural.forward(online, batch.next_features), axis=1)
        boot = q_target[rows, best]
    else:
        boot = q_target.min(axis=1)
    if config.value_floor is not None:
        boot = np.maximum(boot, config.value_floor)
    return np.where(batch.terminal, batch.costs, batch.costs + config.gamma * boot)


def lagrangian_cost(weights: Sequence[float], channel_costs: Sequence[float]) -> float:
    if len(weights) != len(channel_costs):
        raise ValueError(f"{len(weights)} weights for {len(channel_costs)} cost channels")
    return float(np.dot(weights, channel_costs))


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    terminals: int
    cumulative_cost: float
    epsilon: float
    lr: float


def write_training_log(rows: Sequence[EpisodeLog], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "steps", "terminals", "cumulative_cost", "epsilon", "lr"])
        for r in rows:
            w.writerow([r.episode, r.steps, r.terminals, repr(r.cumulative_cost), repr(r.epsilon), repr(r.lr)])


@dataclass
class CriticBundle:
    channel: int
    online: MlpParameters
    target: MlpParameters
    buffer: ReplayBuffer
    log: list[EpisodeLog] = field(default_factory=list)


def train_critic(
    channel: int,
    env,
    config: TrainerConfig = TrainerConfig(),
    cost_fn: Callable | None = None,
    hidden_sizes: Sequence[int] | None = None,
    guide=None,
    absorbing_cost: float | None = None,
) -> CriticBundle:
    """Train one critic on one cost channel.

    ``cost_fn(state, action, next_state)`` overrides the channel's own cost
    (used for the scalarised baseline). Features always come from
    ``env.features(channel, .)``. ``guide`` supplies
    ``(constraint_critics, thresholds)`` for hierarchical exploration.
    ``absorbing_cost`` is the per-step cost of a failed state under the
    absorbing terminal rule, by default ``env.absorbing_cost(channel)``.

    The run is a pure function of ``config`` (its seed included).
    """
    if cost_fn is None:
        def cost_fn(s, a, s2):
            return env.cost_channel(channel, s, a, s2)

    tail = 0.0
    if config.terminal_rule == "absorbing":
        if absorbing_cost is None:
            absorbing_cost = env.absorbing_cost(channel)
        tail = absorbing_tail(absorbing_cost, config.gamma)

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    rng = np.random.default_rng(seeds[0])
    env.reset(seed=seeds[1])
    arch = NetworkArchitecture(
        env.state_dim, tuple(hidden_sizes or default_hidden(channel)), env.num_actions
    )
    online = neural.init_weights(arch, seeds[2])
    bundle = CriticBundle(channel, online, online, ReplayBuffer(config.buffer_capacity))
    adam = neural.AdamState.zeros_like(online) if config.optimizer == "adam" else None
    sched = config.schedules
    step_count = 0

    for episode in range(1, config.episodes + 1):
        state = env.reset()
        total, terminals = 0.0, 0
        for t in range(config.steps_per_episode):
            step_count += 1
            tick = episode if sched.schedule_unit == "episode" else step_count
            eps = neural.schedule_value(sched, "epsilon", tick)
            lr = neural.schedule_value(sched, "lr", tick)

            features = env.features(channel, state)
            q = neural.forward(bundle.online, features)
            allowed = None
            if config.exploration == "hierarchical":
                allowed = _hierarchical_actions(channel, state, env, q, guide)
            action = epsilon_greedy(q, min(eps, 1.0), rng, allowed)
            next_state, terminal = env.step(state, action)
            cost = float(cost_fn(state, action, next_state))
            total += cost
            truncated = (t == config.steps_per_episode - 1) and not terminal
            bundle.buffer.push(TransitionRecord(
                features, action, cost + tail if terminal else cost, env.features(channel, next_state), terminal, truncated
            ))

            if step_count % config.replay_period == 0 and len(bundle.buffer) >= config.learning_starts:
                batch = bundle.buffer.sample_batch(config.minibatch_size, rng)
                y = batch_targets(batch, bundle.online, bundle.target, config)
                grad = neural.gradient(bundle.online, batch.features, batch.actions, y)
                if adam is None:
                    bundle.online = neural.sgd_step(bundle.online, grad, lr)
                else:
                    bundle.online, adam = neural.adam_step(bundle.online, grad, lr, adam)
                bundle.target = neural.soft_update(bundle.target, bundle.online, config.tau)

            if terminal:
                terminals += 1
                if not config.restart_on_terminal:
                    break
                state = env.reset()
            else:
                state = next_state
        bundle.log.append(EpisodeLog(episode, t + 1, terminals, total, eps, lr))
        if episode % 50 == 0:
            log.info("channel %d episode %d: cost %.2f, %d terminals", channel, episode, total, terminals)
    return bundle


def _hierarchical_actions(channel, state, env, q_self, guide):
    """Actions allowed while training ``channel`` in the hierarchical mode.

    Constraint ``c`` explores within ``A_c``, built from the frozen critics of
    higher-priority constraints plus its own online values. The primary
    critic explores within ``A_C``. Empty sets fall back to the deepest
    non-empty one.
    """
    if guide is None:
        raise ValueError("hierarchical exploration needs (constraint_critics, thresholds)")
    critics, thresholds = guide
    n = 0 if channel == 0 else channel - 1
    chain = list(critics) if channel == 0 else list(critics[:n])
    values = [_evaluate(c, env.features(i + 1, state)) for i, c in enumerate(chain)]
    budgets = list(thresholds) if channel == 0 else list(thresholds[:channel])
    if channel:
        values.append(q_self)
    sets = action_sets_from_values(values, budgets[: len(values)])
    deepest = sets.feasible
    return None if deepest is None else np.asarray(deepest)


class DQNCritic(BaseEstimator):
    """Estimator wrapper around :func:`train_critic`.

    ``fit(env)`` trains on ``env``; ``predict(X)`` returns Q-values for rows of
    features. The learned parameters live in ``params_``.
    """

    def __init__(self, channel=0, hidden_sizes=None, config=None, cost_weights=None):
        self.channel = channel
        self.hidden_sizes = hidden_sizes
        self.config = config
        self.cost_weights = cost_weights

    def fit(self, env, y=None, guide=None):
        config = self.config or TrainerConfig()
        cost_fn = absorbing = None
        if self.cost_weights is not None:
            weights = list(self.cost_weights)
            if config.terminal_rule == "absorbing":
                absorbing = lagrangian_cost(weights, [env.absorbing_cost(v) for v in range(len(weights))])

            def cost_fn(s, a, s2):
                channels = [env.cost_channel(v, s, a, s2) for v in range(len(weights))]
                return lagrangian_cost(weights, channels)

        bundle = train_critic(self.channel, env, config, cost_fn, self.hidden_sizes, guide, absorbing)
        self.params_ = bundle.online
        self.target_params_ = bundle.target
        self.training_log_ = bundle.log
        return self

    def _check(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("DQNCritic is not fitted yet")

    def predict(self, X) -> np.ndarray:
        self._check()
        X = check_states(X, self.params_.arch.input_dim)
        return neural.forward(self.params_, X)

    def predict_action(self, X) -> np.ndarray:
        return np.argmin(self.predict(X), axis=1)

    @classmethod
    def from_params(cls, params: MlpParameters, channel: int = 0) -> "DQNCritic":
        critic = cls(channel=channel, hidden_sizes=params.arch.hidden_sizes)
        critic.params_ = params
        critic.target_params_ = params
        critic.training_log_ = []
        return critic


def with_overrides(config: TrainerConfig, **overrides) -> TrainerConfig:
    return replace(config, **overrides)
