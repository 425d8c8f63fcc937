"""Trajectory selection: reachability and traversability scoring over the
candidate set, argmin selection, and the pivot/limiter command override."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .kinematics import VelocityCommand
from .losses import obs_distance
from .prediction import PredictedObservation
from .sensor import frontal_clearance

PIVOT_OMEGA = 0.5
LIMIT_V = 0.2


@dataclass(frozen=True)
class SelectionParams:
    p_trav_penalty: float = 100.0
    trav_threshold: float = 0.5
    d_safe: float = 0.3
    logistic_scale: float = 0.05
    frontal_half_width: float = np.pi / 2


def reachability_score(fwd_mid, bwd_mid) -> float:
    """Squared observation distance between the two mid-horizon predictions."""
    return obs_distance(fwd_mid, bwd_mid) ** 2


def traversability_probability(pred, params: SelectionParams) -> float:
    """Logistic clearance check on the frontal sector of a prediction."""
    c = frontal_clearance(pred, params.frontal_half_width)
    return float(expit((c - params.d_safe) / params.logistic_scale))


def traversability_score(p: float, params: SelectionParams) -> float:
    return params.p_trav_penalty if p < params.trav_threshold else 0.0


def score_candidates(candidates, subgoal_observations, params: SelectionParams):
    """Fill score_reac / score_trav on every candidate in place.

    Bidirectional candidates connect their forward and backward mid-horizon
    predictions; unidirectional candidates compare the forward endpoint to
    the subgoal observation itself. Traversability always checks the
    forward prediction at the last forward step (the frontal view the robot
    would face mid-horizon)."""
    for cand in candidates:
        fwd_mid = PredictedObservation(
            cand.fwd_ranges[-1], cand.fwd_validity[-1]
        )
        if cand.bwd_ranges is not None:
            other = PredictedObservation(cand.bwd_ranges[0], cand.bwd_validity[0])
        else:
            other = subgoal_observations[cand.subgoal_index]
        cand.score_reac = reachability_score(fwd_mid, other)
        p = traversability_probability(fwd_mid, params)
        cand.score_trav = traversability_score(p, params)
    return candidates


def select(candidates) -> tuple[int, int]:
    """Argmin of reachability + traversability; ties prefer the smallest
    subgoal index, then the smallest sample index."""
    if not candidates:
        raise ValueError("need at least one candidate")
    best = min(
        candidates,
        key=lambda c: (c.score_reac + c.score_trav, c.subgoal_index, c.sample_index),
    )
    return best.subgoal_index, best.sample_index


def limit_velocity(cmd: VelocityCommand) -> VelocityCommand:
    """Cap linear speed at 0.2 m/s, rescaling omega to keep the turning
    radius v/omega unchanged."""
    if abs(cmd.v) <= LIMIT_V:
        return cmd
    scale = LIMIT_V / abs(cmd.v)
    return VelocityCommand(
        LIMIT_V if cmd.v > 0 else -LIMIT_V, cmd.omega * scale
    )


@dataclass
class PivotState:
    """Latched pivot bookkeeping carried across planning cycles."""

    active: bool = False
    direction: float = 0.0
    steps: int = 0
    rotation: float = 0.0


def apply_override(
    selected,
    current_trav: float,
    dt: float,
    params: SelectionParams,
    state: PivotState | None = None,
) -> tuple[VelocityCommand, PivotState]:
    """Final command gate: pass the selected candidate's first command
    through the limiter when the current view is traversable, otherwise
    pivot in place toward the candidate's net rotation.

    A pivot latches until 90 degrees of cumulative rotation with a minimum
    of three steps; the returned state must be fed back on the next cycle.
    """
    if state is None:
        state = PivotState()
    if state.active:
        if state.rotation >= np.pi / 2 and state.steps >= 3:
            state = PivotState()
        else:
            state.steps += 1
            state.rotation += abs(PIVOT_OMEGA) * dt
            return VelocityCommand(0.0, state.direction), state
    if current_trav >= params.trav_threshold:
        first = VelocityCommand(float(selected.cmds[0, 0]), float(selected.cmds[0, 1]))
        return limit_velocity(first), state
    direction = PIVOT_OMEGA if selected.total_rotation >= 0 else -PIVOT_OMEGA
    state = PivotState(active=True, direction=direction, steps=1, rotation=abs(PIVOT_OMEGA) * dt)
    return VelocityCommand(0.0, direction), state
