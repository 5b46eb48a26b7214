import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from lexrl import neural
from lexrl.cartpole import CartPole
from lexrl.mdp import TransitionRecord
from lexrl.neural import MlpParameters, NetworkArchitecture
from lexrl.replay import ReplayBuffer
from lexrl.training import (
    DQNCritic,
    TrainerConfig,
    absorbing_tail,
    batch_targets,
    default_hidden,
    double_dqn_target,
    dqn_target,
    epsilon_greedy,
    lagrangian_cost,
    train_critic,
    write_training_log,
)


def constant_net(values):
    """A network whose output ignores its input: zero weights, biases = values."""
    values = np.asarray(values, dtype=float)
    arch = NetworkArchitecture(1, (), values.size)
    return MlpParameters(arch, (np.zeros((values.size, 1)),), (values,))


def record(cost, terminal=False, truncated=False):
    return TransitionRecord(np.zeros(1), 0, cost, np.zeros(1), terminal, truncated)


def test_epsilon_greedy_examples():
    rng = np.random.default_rng(0)
    assert epsilon_greedy([3, 1, 2], 0.0, rng) == 1
    assert epsilon_greedy([1, 1, 2], 0.0, rng) == 0


def test_epsilon_one_is_uniform():
    rng = np.random.default_rng(1)
    draws = np.array([epsilon_greedy(np.zeros(5), 1.0, rng) for _ in range(100_000)])
    counts = np.bincount(draws, minlength=5)
    assert np.all(np.abs(counts - 20_000) < 3 * np.sqrt(100_000 * 0.2 * 0.8))


def test_epsilon_greedy_respects_allowed_subset():
    rng = np.random.default_rng(2)
    assert epsilon_greedy([0, 5, 1], 0.0, rng, allowed=[1, 2]) == 2
    assert {epsilon_greedy([0, 5, 1], 1.0, rng, allowed=[1, 2]) for _ in range(200)} == {1, 2}
    with pytest.raises(ValueError):
        epsilon_greedy([1.0], 1.5, rng)


def test_dqn_target_examples():
    assert dqn_target(record(10.0, terminal=True), constant_net([4, 2, 6]), 0.5) == 10.0
    assert dqn_target(record(0.0), constant_net([4, 2, 6]), 0.5) == 1.0
    assert dqn_target(record(1.0, truncated=True), constant_net([2, 5]), 0.5) == 2.0


def test_double_dqn_target_examples():
    assert double_dqn_target(record(5.0, terminal=True), constant_net([1, 9]), constant_net([7, 3]), 0.9) == 5.0
    assert double_dqn_target(record(0.0), constant_net([1, 9]), constant_net([7, 3]), 0.999999) == pytest.approx(7.0, rel=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=6), st.floats(0, 5), st.floats(0.01, 0.99))
def test_double_dqn_equals_dqn_when_networks_coincide(q, r, gamma):
    net = constant_net(q)
    rec = record(r)
    assert double_dqn_target(rec, net, net, gamma) == dqn_target(rec, net, gamma)
    assert dqn_target(rec, net, gamma) >= r - gamma * np.max(np.abs(q))


def test_value_floor_only_touches_bootstrapped_part():
    net = constant_net([-4.0, -2.0])
    assert dqn_target(record(1.0), net, 0.5) == -1.0
    assert dqn_target(record(1.0), net, 0.5, value_floor=0.0) == 1.0
    assert dqn_target(record(3.0, terminal=True), net, 0.5, value_floor=0.0) == 3.0


def test_truncation_bootstraps_like_the_infinite_horizon_value():
    # two-state chain: state 0 costs 1 per step and moves to absorbing state 1 (cost 0)
    # true value of state 0 = 1; cutting the episode after the first step must not change it
    gamma = 0.5
    v1 = 0.0
    truncated = record(1.0, truncated=True)
    assert dqn_target(truncated, constant_net([v1]), gamma) == pytest.approx(1.0 + gamma * v1)
    # and a self-loop with cost 1: fixed point of the truncated target is 1/(1-gamma)
    v = 0.0
    for _ in range(200):
        v = dqn_target(truncated, constant_net([v]), gamma)
    assert v == pytest.approx(1 / (1 - gamma))


def test_batch_targets_match_per_record_targets():
    rng = np.random.default_rng(3)
    arch = NetworkArchitecture(3, (6,), 4)
    online, target = neural.init_weights(arch, 1), neural.init_weights(arch, 2)
    buf = ReplayBuffer(50)
    for i in range(20):
        buf.push(TransitionRecord(rng.normal(size=3), int(rng.integers(4)), float(rng.random()),
                                  rng.normal(size=3), terminal=i % 5 == 0, truncated=i % 7 == 0 and i % 5 != 0))
    batch = buf.sample_batch(16, rng)
    for rule, fn in (("double_dqn", lambda r: double_dqn_target(r, online, target, 0.9, None)),
                     ("dqn", lambda r: dqn_target(r, target, 0.9, None))):
        cfg = TrainerConfig(gamma=0.9, target_rule=rule, value_floor=None)
        got = batch_targets(batch, online, target, cfg)
        records = [TransitionRecord(batch.features[i], int(batch.actions[i]), float(batch.costs[i]),
                                    batch.next_features[i], bool(batch.terminal[i]), bool(batch.truncated[i]))
                   for i in range(16)]
        np.testing.assert_allclose(got, [fn(r) for r in records], rtol=1e-12)


def test_lagrangian_cost_examples():
    assert lagrangian_cost([1, 5, 25], [5, 0, 0]) == 5
    assert lagrangian_cost([1, 5, 25], [0, 1, 1]) == 30
    assert lagrangian_cost([0, 0, 0], [3, 1, 1]) == 0
    with pytest.raises(ValueError):
        lagrangian_cost([1, 5], [1, 2, 3])


def test_config_validation():
    assert TrainerConfig().episodes == 400 and TrainerConfig().target_rule == "double_dqn"
    for bad in ({"replay_period": 0}, {"gamma": 1.0}, {"target_rule": "sarsa"}, {"episodes": -1}):
        with pytest.raises(ValueError):
            TrainerConfig(**bad)


def test_default_architectures():
    assert default_hidden(0) == (64, 16)
    assert default_hidden(1) == default_hidden(2) == (64, 64)


def test_zero_episodes_returns_the_initialisation():
    cfg = TrainerConfig(episodes=0, seed=5)
    bundle = train_critic(1, CartPole(), cfg)
    seeds = np.random.SeedSequence(5).spawn(3)
    expected = neural.init_weights(NetworkArchitecture(4, (64, 64), 5), seeds[2])
    assert bundle.online.equals(expected) and len(bundle.buffer) == 0


def test_training_is_deterministic_per_seed():
    cfg = TrainerConfig(episodes=2, steps_per_episode=40, seed=9, learning_starts=16, minibatch_size=16)
    a = train_critic(2, CartPole(), cfg)
    b = train_critic(2, CartPole(), cfg)
    assert a.online.equals(b.online) and a.target.equals(b.target)
    assert [r.cost for r in a.buffer.records()] == [r.cost for r in b.buffer.records()]
    c = train_critic(2, CartPole(), TrainerConfig(**{**cfg.__dict__, "seed": 10}))
    assert not a.online.equals(c.online)


def test_training_fills_buffer_and_log(tmp_path):
    cfg = TrainerConfig(episodes=3, steps_per_episode=30, seed=1, learning_starts=8, minibatch_size=8)
    bundle = train_critic(0, CartPole(), cfg)
    assert len(bundle.buffer) == 90  # restarts after a crash keep the episode going
    assert [row.episode for row in bundle.log] == [1, 2, 3]
    assert all(row.steps == 30 for row in bundle.log)
    assert bundle.online.arch.hidden_sizes == (64, 16)
    assert not bundle.online.equals(train_critic(0, CartPole(), TrainerConfig(episodes=0, seed=1)).online)
    path = tmp_path / "log.csv"
    write_training_log(bundle.log, path)
    assert path.read_text().splitlines()[0] == "episode,steps,terminals,cumulative_cost,epsilon,lr"


def test_episode_stops_at_terminal_when_restart_disabled():
    cfg = TrainerConfig(episodes=2, steps_per_episode=200, seed=2, restart_on_terminal=False,
                        learning_starts=10_000)
    bundle = train_critic(1, CartPole(), cfg)
    assert all(row.terminals <= 1 for row in bundle.log)
    assert sum(r.terminal for r in bundle.buffer.records()) == sum(row.terminals for row in bundle.log)


def test_only_the_final_step_of_a_surviving_episode_is_truncated():
    cfg = TrainerConfig(episodes=4, steps_per_episode=5, seed=0, learning_starts=10_000)
    records = train_critic(1, CartPole(), cfg).buffer.records()
    flags = [r.truncated for r in records]
    assert flags == [False, False, False, False, True] * 4


def test_critic_estimator_api():
    cfg = TrainerConfig(episodes=1, steps_per_episode=20, seed=0, learning_starts=8, minibatch_size=8)
    critic = DQNCritic(channel=1, config=cfg)
    assert clone(critic).get_params()["channel"] == 1
    critic.fit(CartPole())
    q = critic.predict(np.zeros((3, 4)))
    assert q.shape == (3, 5)
    assert list(critic.predict_action(np.zeros((2, 4)))) == [int(np.argmin(q[0]))] * 2
    restored = DQNCritic.from_params(critic.params_, channel=1)
    np.testing.assert_allclose(restored.predict(np.zeros((1, 4))), q[:1], rtol=1e-12, atol=1e-15)


def test_scalarised_critic_charges_the_weighted_sum():
    cfg = TrainerConfig(episodes=1, steps_per_episode=30, seed=0, learning_starts=10_000)
    env = CartPole()
    critic = DQNCritic(channel=0, config=cfg, cost_weights=(1.0, 5.0, 25.0)).fit(env)
    bundle = train_critic(0, CartPole(), cfg, cost_fn=lambda s, a, s2: lagrangian_cost(
        (1.0, 5.0, 25.0), [env.cost_channel(v, s, a, s2) for v in range(3)]))
    assert critic.training_log_[0].cumulative_cost == bundle.log[0].cumulative_cost


def test_hierarchical_mode_restricts_exploration():
    # a constraint critic that forbids every action but 4 keeps the primary critic on action 4
    forbid = constant_net([50, 50, 50, 50, 0])
    arch_in = NetworkArchitecture(4, (), 5)
    forbid = MlpParameters(arch_in, (np.zeros((5, 4)),), forbid.biases)
    cfg = TrainerConfig(episodes=1, steps_per_episode=30, seed=0, exploration="hierarchical",
                        learning_starts=10_000)
    bundle = train_critic(0, CartPole(), cfg, guide=([forbid, forbid], [10.0, 10.0]))
    assert {r.action for r in bundle.buffer.records()} == {4}
    with pytest.raises(ValueError):
        train_critic(0, CartPole(), cfg)


def test_absorbing_tail_is_the_discounted_future_of_a_held_cost():
    assert absorbing_tail(1.0, 0.5) == 1.0
    assert absorbing_tail(10.0, 0.995) == pytest.approx(1990.0)
    assert absorbing_tail(0.0, 0.9) == 0.0


@pytest.mark.parametrize("channel, per_step", [(0, 10.0), (1, 1.0), (2, 1.0)])
def test_terminal_records_carry_the_absorbing_tail(channel, per_step):
    base = dict(episodes=3, steps_per_episode=200, seed=4, learning_starts=10_000)
    zero = train_critic(channel, CartPole(), TrainerConfig(terminal_rule="zero", **base)).buffer.records()
    held = train_critic(channel, CartPole(), TrainerConfig(terminal_rule="absorbing", **base)).buffer.records()
    assert any(r.terminal for r in zero)
    tail = absorbing_tail(per_step, 0.995)
    for a, b in zip(zero, held, strict=True):
        assert b.cost == (a.cost + tail if a.terminal else a.cost)


def test_absorbing_rule_leaves_the_training_log_in_raw_costs():
    base = dict(episodes=2, steps_per_episode=200, seed=4, learning_starts=10_000)
    zero = train_critic(0, CartPole(), TrainerConfig(terminal_rule="zero", **base))
    held = train_critic(0, CartPole(), TrainerConfig(terminal_rule="absorbing", **base))
    assert [r.cumulative_cost for r in zero.log] == [r.cumulative_cost for r in held.log]


def test_scalarised_critic_holds_the_weighted_absorbing_cost():
    cfg = TrainerConfig(episodes=2, steps_per_episode=100, seed=4, learning_starts=32, minibatch_size=32)
    env = CartPole()
    critic = DQNCritic(channel=0, config=cfg, cost_weights=(1.0, 5.0, 25.0)).fit(env)
    assert critic.training_log_[0].terminals > 0

    def weighted(s, a, s2):
        return lagrangian_cost((1.0, 5.0, 25.0), [env.cost_channel(v, s, a, s2) for v in range(3)])

    held = train_critic(0, CartPole(), cfg, cost_fn=weighted, absorbing_cost=1.0 * 10 + 5.0 * 1 + 25.0 * 1)
    assert critic.params_.equals(held.online)
    primary_only = train_critic(0, CartPole(), cfg, cost_fn=weighted)
    assert not critic.params_.equals(primary_only.online)


def test_unknown_terminal_rule_is_rejected():
    with pytest.raises(ValueError, match="terminal_rule"):
        TrainerConfig(terminal_rule="clip")
