"""Train the cart-pole critics and evaluate greedy controllers built from them."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import neural
from ..cartpole import CartPole
from ..lexicographic import LexicographicAgent
from ..training import DQNCritic, write_training_log
from .config import RunConfig, dump_config
from .metrics import (
    Bands,
    Trajectory,
    compute_metrics,
    histogram,
    write_episode_csv,
    write_histogram_csv,
    write_summary_json,
)

log = logging.getLogger(__name__)

CHANNELS = (0, 1, 2)
LAGRANGIAN = "lag"
CHANNEL_NAMES = ("q0", "q1", "q2")


class HarnessError(RuntimeError):
    pass


def weight_path(out: Path, name) -> Path:
    return Path(out) / (f"q{name}.weights" if isinstance(name, int) else f"{name}.weights")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _channel_seed(seed: int, index: int) -> int:
    # independent, reproducible stream per critic
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _prepare_out(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise HarnessError(f"output directory {out} is not writable: {exc}") from None
    return out


def train_all(cfg: RunConfig, out=None, include_lagrangian: bool | None = None) -> dict[str, Path]:
    """Train Q0, Q1, Q2 (and optionally the scalarised critic); write weights and logs.

    Each critic trains in its own environment with its own seed stream, so
    the order of training does not matter.
    """
    out = _prepare_out(out or cfg.out)
    if include_lagrangian is None:
        include_lagrangian = cfg.train_lagrangian
    (out / "config.ini").write_text(dump_config(replace(cfg, out=str(out))))
    written = {}
    jobs: list[tuple[object, DQNCritic]] = [
        (c, DQNCritic(channel=c, config=replace(cfg.trainer, seed=_channel_seed(cfg.seed, c))))
        for c in CHANNELS
    ]
    if include_lagrangian:
        jobs.append((LAGRANGIAN, DQNCritic(
            channel=0,
            hidden_sizes=(64, 64),
            config=replace(cfg.trainer, seed=_channel_seed(cfg.seed, len(CHANNELS))),
            cost_weights=cfg.lagrangian_weights,
        )))
    for name, critic in jobs:
        log.info("training critic %s", name)
        critic.fit(CartPole(cfg.environment))
        path = weight_path(out, name)
        neural.save(critic.params_, path)
        tag = f"q{name}" if isinstance(name, int) else name
        write_training_log(critic.training_log_, out / f"train_{tag}.csv")
        written[tag] = path
    return written


def load_critics(weights_dir, names: Sequence) -> tuple[list[neural.MlpParameters], dict[str, str]]:
    params, checksums = [], {}
    for name in names:
        path = weight_path(weights_dir, name)
        if not path.exists():
            raise HarnessError(f"missing weight file {path}; run 'train' first")
        checksums[path.name] = file_sha256(path)
        params.append(neural.load(path))
    return params, checksums


Controller = Callable[[np.ndarray], tuple[int, str]]


def greedy_controller(params: neural.MlpParameters, env: CartPole, channel: int, name: str) -> Controller:
    def act(state):
        return int(np.argmin(neural.forward(params, env.features(channel, state)))), name
    return act


def lex_controller(critics, env: CartPole, raw_thresholds, gamma) -> Controller:
    agent = LexicographicAgent(critics, tuple(raw_thresholds), gamma, feature_map=env.features).fit()

    def act(state):
        action, channel = agent.select_action(state)
        return action, CHANNEL_NAMES[channel]
    return act


def rollout(env: CartPole, controller: Controller, seed_key, max_steps: int,
            restart_on_terminal: bool = False) -> Trajectory:
    """One greedy episode from an initial state drawn with ``seed_key``."""
    state = env.reset(seed=np.random.SeedSequence(seed_key))
    traj = Trajectory()
    for _ in range(max_steps):
        action, channel = controller(state)
        nxt, terminal = env.step(state, action)
        traj.record(nxt[0], nxt[2], env.force(action), channel)
        if terminal:
            traj.terminated = True
            if not restart_on_terminal:
                break
            nxt = env.reset()
        state = nxt
    return traj


def _mode_tag(mode: str, channel: int | None, thresholds) -> str:
    if mode == "lex":
        return "lex_" + "_".join(format(k, "g") for k in thresholds)
    if mode == "single":
        return f"single_q{channel}"
    return "lagrangian"


def evaluate(cfg: RunConfig, mode: str, weights_dir=None, out=None, channel: int | None = None,
             thresholds: Sequence[float] | None = None) -> dict:
    """Run ``cfg.evaluation.episodes`` greedy episodes and write CSV/JSON outputs.

    Returns the summary payload that is also written to ``summary.json``.
    """
    weights_dir = Path(weights_dir or cfg.out)
    env = CartPole(cfg.environment)
    names: list
    if mode == "lex":
        thresholds = tuple(cfg.thresholds if thresholds is None else thresholds)
        names = list(CHANNELS)
        if len(thresholds) != len(CHANNELS) - 1:
            raise HarnessError(f"lex mode needs {len(CHANNELS) - 1} thresholds, got {len(thresholds)}")
    elif mode == "single":
        if channel not in CHANNELS:
            raise HarnessError(f"single mode needs a channel in {CHANNELS}, got {channel}")
        names = [channel]
    elif mode == "lagrangian":
        names = [LAGRANGIAN]
    else:
        raise HarnessError(f"unknown evaluation mode {mode!r}")

    params, before = load_critics(weights_dir, names)
    if mode == "lex":
        controller = lex_controller(params, env, thresholds, cfg.trainer.gamma)
        usage_names = CHANNEL_NAMES
    elif mode == "single":
        controller = greedy_controller(params[0], env, channel, CHANNEL_NAMES[channel])
        usage_names = CHANNEL_NAMES
    else:
        controller = greedy_controller(params[0], env, 0, LAGRANGIAN)
        usage_names = CHANNEL_NAMES + (LAGRANGIAN,)

    ev = cfg.evaluation
    trajectories = [
        rollout(env, controller, [cfg.seed, 1, e], cfg.environment.episode_length, ev.restart_on_terminal)
        for e in range(ev.episodes)
    ]
    bands = Bands(cfg.environment.position_band, cfg.environment.angle_band)
    summary = compute_metrics(trajectories, usage_names, bands)

    after = {name: file_sha256(weights_dir / name) for name in before}
    if after != before:
        raise HarnessError("weight files changed during evaluation")

    tag = _mode_tag(mode, channel, thresholds)
    eval_dir = _prepare_out(Path(out) if out else weights_dir / f"eval_{tag}")
    write_episode_csv(trajectories, usage_names, eval_dir / "episodes.csv", bands)
    positions = np.concatenate([t.positions for t in trajectories])
    angles = np.concatenate([t.angles for t in trajectories])
    write_histogram_csv(histogram(positions, ev.position_bins), eval_dir / "hist_position.csv")
    write_histogram_csv(histogram(angles, ev.angle_bins), eval_dir / "hist_angle.csv")
    payload = {
        **summary.to_dict(),
        "mode": mode,
        "channel": channel,
        "raw_thresholds": list(thresholds) if mode == "lex" else None,
        "seed": cfg.seed,
        "terminated_episodes": sum(t.terminated for t in trajectories),
        "weights": before,
    }
    write_summary_json(payload, eval_dir / "summary.json")
    return payload
