"""Evaluation metrics: pooled violation percentages, force, critic usage, histograms."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class Trajectory:
    """One evaluation episode, recorded on successor states.

    ``positions[t]`` and ``angles[t]`` belong to the state reached by step
    ``t``; the step that enters a terminal state is included, nothing after it.
    """

    positions: list[float] = field(default_factory=list)
    angles: list[float] = field(default_factory=list)
    forces: list[float] = field(default_factory=list)
    channels: list[str] = field(default_factory=list)
    terminated: bool = False

    def record(self, position: float, angle: float, force: float, channel: str) -> None:
        self.positions.append(float(position))
        self.angles.append(float(angle))
        self.forces.append(float(force))
        self.channels.append(channel)

    def __len__(self) -> int:
        return len(self.forces)


@dataclass(frozen=True)
class EvalSummary:
    pct_outside_position: float
    pct_outside_angle: float
    mean_abs_force: float
    usage_fraction: dict[str, float]
    episodes: int
    steps_counted: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Bands:
    position: float = 0.1
    angle: float = 0.03


def _pct(flags: np.ndarray) -> float:
    return 100.0 * float(flags.sum()) / flags.size


def compute_metrics(trajectories: Sequence[Trajectory], channel_names: Sequence[str] = ("q0", "q1", "q2"),
                    bands: Bands = Bands()) -> EvalSummary:
    """Pool every counted step of every episode into one summary.

    >>> t = Trajectory()
    >>> for f in (5.0, -5.0, 0.0, 10.0):
    ...     t.record(0.0, 0.0, f, "q0")
    >>> compute_metrics([t]).mean_abs_force
    5.0
    """
    trajectories = list(trajectories)
    if not trajectories or sum(len(t) for t in trajectories) == 0:
        raise ValueError("compute_metrics needs at least one recorded step")
    pos = np.concatenate([np.asarray(t.positions) for t in trajectories])
    ang = np.concatenate([np.asarray(t.angles) for t in trajectories])
    force = np.concatenate([np.asarray(t.forces) for t in trajectories])
    used = [c for t in trajectories for c in t.channels]
    names = list(channel_names)
    for c in used:
        if c not in names:
            names.append(c)
    usage = {name: used.count(name) / len(used) for name in names}
    return EvalSummary(
        pct_outside_position=_pct(np.abs(pos) > bands.position),
        pct_outside_angle=_pct(np.abs(ang) > bands.angle),
        mean_abs_force=float(np.mean(np.abs(force))),
        usage_fraction=usage,
        episodes=len(trajectories),
        steps_counted=int(force.size),
    )


def histogram(values, edges: Sequence[float]) -> list[tuple[float, float, int, float]]:
    """Counts over ``edges`` plus two open outer bins, so nothing is dropped.

    Rows are ``(low, high, count, fraction)``; bins are half-open ``[low, high)``.
    """
    values = np.asarray(values, dtype=np.float64)
    full = np.concatenate([[-np.inf], np.asarray(edges, dtype=np.float64), [np.inf]])
    idx = np.searchsorted(full, values, side="right") - 1
    counts = np.bincount(idx, minlength=full.size - 1)[: full.size - 1]
    total = max(values.size, 1)
    return [(float(full[i]), float(full[i + 1]), int(counts[i]), counts[i] / total) for i in range(full.size - 1)]


def _num(x: float) -> str:
    # 17 significant digits so re-parsing is exact
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def write_histogram_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_low", "bin_high", "count", "fraction"])
        for low, high, count, frac in rows:
            w.writerow([_num(low), _num(high), count, _num(frac)])


def episode_rows(trajectories: Sequence[Trajectory], channel_names: Sequence[str], bands: Bands = Bands()):
    for e, t in enumerate(trajectories):
        s = compute_metrics([t], channel_names, bands)
        yield [e, len(t), s.pct_outside_position, s.pct_outside_angle, s.mean_abs_force] + [
            s.usage_fraction[name] for name in channel_names
        ]


def write_episode_csv(trajectories, channel_names, path, bands: Bands = Bands()) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "steps", "pct_out_pos", "pct_out_angle", "mean_abs_force"]
                   + [f"usage_{name}" for name in channel_names])
        for row in episode_rows(trajectories, channel_names, bands):
            w.writerow(row[:2] + [_num(x) for x in row[2:]])


def read_episode_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k in ("episode", "steps") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def summary_from_episode_rows(rows: Sequence[dict], channel_names: Sequence[str]) -> EvalSummary:
    """Rebuild the pooled summary from per-episode rows (step-weighted means)."""
    steps = np.array([r["steps"] for r in rows], dtype=np.float64)
    total = steps.sum()

    def pooled(key):
        return float(np.dot(steps, [r[key] for r in rows]) / total)

    return EvalSummary(
        pct_outside_position=pooled("pct_out_pos"),
        pct_outside_angle=pooled("pct_out_angle"),
        mean_abs_force=pooled("mean_abs_force"),
        usage_fraction={name: pooled(f"usage_{name}") for name in channel_names},
        episodes=len(rows),
        steps_counted=int(total),
    )


def write_summary_json(payload: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
