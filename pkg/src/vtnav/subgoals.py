"""Subgoal selection: the visual trajectory store, the sliding subgoal
window, and the window-advance rules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import W_MAX, Pose2D
from .losses import obs_distance
from .sensor import PanoramicObservation

D_TH = 0.8
THETA_TH = 0.4
N_WINDOW = 3
PIXEL_DIFF_THRESHOLD = 0.05


@dataclass(frozen=True)
class SsParams:
    d_th: float = D_TH
    theta_th: float = THETA_TH
    n_window: int = N_WINDOW


@dataclass(frozen=True)
class SubgoalRecord:
    """One visual-trajectory entry: the observation at the subgoal, the
    demonstration commands leading to the next subgoal, and the recording
    pose (evaluation only; the planner never reads it)."""

    obs: PanoramicObservation
    teleop_cmds: np.ndarray
    pose: Pose2D


@dataclass(frozen=True)
class VisualTrajectory:
    records: list[SubgoalRecord]
    stride_steps: int = 8
    dt: float = 0.333
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.records) < 2:
            raise ValueError("a visual trajectory needs at least two records")

    def __len__(self) -> int:
        return len(self.records)

    def all_commands(self) -> np.ndarray:
        parts = [r.teleop_cmds for r in self.records if r.teleop_cmds.size]
        if not parts:
            return np.zeros((0, 2))
        return np.concatenate(parts, axis=0)

    def cmd_offsets(self) -> np.ndarray:
        """Index of each record's first command in all_commands(); one extra
        trailing entry holds the total count."""
        counts = [len(r.teleop_cmds) for r in self.records]
        return np.concatenate([[0], np.cumsum(counts)])


def current_window(vt: VisualTrajectory, s: int, params: SsParams) -> list[int]:
    """Indices of the next n_window subgoal records after s, repeating the
    final goal once the trajectory runs out."""
    if not 0 <= s < len(vt):
        raise IndexError(f"subgoal index {s} out of range")
    last = len(vt) - 1
    return [min(s + 1 + k, last) for k in range(params.n_window)]


def reference_segment(
    vt: VisualTrajectory,
    s: int,
    window_index: int,
    horizon: int,
    start: int | None = None,
    align: float = 0.0,
) -> np.ndarray:
    """Demonstration commands remaining between the robot and the window's
    target subgoal, truncated or zero-padded to the planning horizon.

    start is an index into all_commands() marking the robot's estimated
    progress along the demonstration; it defaults to the anchor record's
    first command. The segment always ends at the target subgoal, so a
    robot that is still short of the anchor replays the previous record's
    tail first instead of starting the next maneuver early (a stale warm
    start systematically overshoots, which both drags the optimum forward
    and keeps the terminal-pose advance test from ever passing; an early
    start cuts corners).

    align is the robot's heading error against the demonstration at start.
    Commands are body-frame, so replaying them from a misaligned heading
    sweeps the wrong arc; a pure-rotation prefix that unwinds the error
    restores the geometry and, after a pivot, steers the warm start back
    onto the route. The prefix also keeps the candidate terminal rotation
    large while misaligned, which correctly holds the advance test off."""
    offsets = vt.cmd_offsets()
    target = min(s + 1 + window_index, len(vt) - 1)
    if start is None:
        start = int(offsets[s])
    start = max(int(start), 0)
    cmds = vt.all_commands()[start : int(offsets[target])]
    out = np.zeros((horizon, 2))
    fill = 0
    if abs(align) > 0.3:
        dt = vt.dt
        n = min(int(np.ceil(abs(align) / (W_MAX * dt))), horizon)
        out[:n, 1] = -align / (n * dt)
        fill = n
    take = min(horizon - fill, cmds.shape[0])
    out[fill : fill + take] = cmds[:take]
    return out


def advance(candidates, s: int, vt: VisualTrajectory, params: SsParams) -> int:
    """Jump to the farthest window subgoal whose candidates all end within
    the distance and heading thresholds; stay at s when none qualifies."""
    by_window: dict[int, list] = {}
    for cand in candidates:
        by_window.setdefault(cand.subgoal_index, []).append(cand)
    i_ss = 0
    for win_idx, group in by_window.items():
        ok = all(
            np.hypot(c.terminal_pose[0], c.terminal_pose[1]) < params.d_th
            and abs(c.terminal_pose[2]) < params.theta_th
            for c in group
        )
        if ok:
            i_ss = max(i_ss, win_idx + 1)
    return min(s + i_ss, len(vt) - 1)


def advance_by_pixel_difference(current_obs, subgoal_obs, p_th: float = PIXEL_DIFF_THRESHOLD) -> bool:
    """Ablation rule: advance one subgoal when the raw observation
    difference falls below the threshold."""
    return obs_distance(current_obs, subgoal_obs) < p_th
