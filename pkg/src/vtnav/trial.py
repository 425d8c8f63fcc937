"""Closed-loop trial execution: start perturbation, slippage plant, collision
and goal detection, subgoal coverage accounting, and per-step logging."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .kinematics import Pose2D
from .planner import MethodVariant, Planner
from .policy import CemParams
from .selection import SelectionParams
from .sensor import render
from .subgoals import SsParams, VisualTrajectory
from .world import GOAL_RADIUS, ROBOT_RADIUS, WorldModel, collision_check, execute_step

START_OFFSETS = (0.0, 0.1, 0.2, 0.3)
SLIPPAGES = (0.0, 0.1, 0.2, 0.3)


@dataclass(frozen=True)
class TrialConfig:
    start_offset: float = 0.0
    slippage: float = 0.0
    rng_seed: int = 0
    max_steps: int | None = None
    goal_radius: float = GOAL_RADIUS


@dataclass
class TrialResult:
    outcome: str
    subgoals_covered: int
    path_length: float
    executed_poses: np.ndarray
    selected_log: list[tuple[int, int, bool]]
    final_subgoal_index: int
    steps: int
    plan_seconds: list[float] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.outcome == "goal_reached"


def _offset_start(vt: VisualTrajectory, world: WorldModel, config: TrialConfig,
                  rng: np.random.Generator) -> Pose2D:
    base = vt.records[0].pose
    if config.start_offset == 0.0:
        return base
    for _ in range(33):
        ang = rng.uniform(0.0, 2.0 * np.pi)
        pose = Pose2D(
            base.x + config.start_offset * np.cos(ang),
            base.y + config.start_offset * np.sin(ang),
            base.theta,
        )
        if not collision_check(world, pose, ROBOT_RADIUS):
            return pose
    return base


def run_trial(
    vt: VisualTrajectory,
    world: WorldModel,
    variant: MethodVariant | None = None,
    config: TrialConfig | None = None,
    cem_params: CemParams | None = None,
    ss_params: SsParams | None = None,
    sel_params: SelectionParams | None = None,
) -> TrialResult:
    """Run one closed-loop trial until goal, collision, timeout, or error.

    Exactly one command executes per planning cycle. A collision ends the
    trial at the violating step and the colliding motion is not logged.
    Module failures inside the loop produce the distinct outcome "error".
    """
    variant = variant or MethodVariant()
    config = config or TrialConfig()
    rng = np.random.default_rng(config.rng_seed)
    pose = _offset_start(vt, world, config, rng)
    planner = Planner(
        vt,
        variant,
        cem_params=cem_params or CemParams(),
        ss_params=ss_params or SsParams(),
        sel_params=sel_params or SelectionParams(),
        dt=vt.dt,
        l_steps=max(1, vt.stride_steps),
        rng_seed=config.rng_seed,
    )
    demo_steps = sum(r.teleop_cmds.shape[0] for r in vt.records)
    max_steps = config.max_steps if config.max_steps is not None else 4 * demo_steps
    goal = vt.records[-1].pose

    poses = [pose]
    log: list[tuple[int, int, bool]] = []
    plan_seconds: list[float] = []
    path_length = 0.0
    covered = 0
    while covered < len(vt.records) and (
        np.hypot(pose.x - vt.records[covered].pose.x, pose.y - vt.records[covered].pose.y)
        < config.goal_radius
    ):
        covered += 1

    outcome = "timeout"
    steps = 0
    for _ in range(max_steps):
        try:
            obs = render(world, pose)
            t0 = time.perf_counter()
            cmd, info = planner.plan(obs)
            plan_seconds.append(time.perf_counter() - t0)
        except Exception:
            outcome = "error"
            break
        new_pose = execute_step(pose, cmd, config.slippage, vt.dt)
        if collision_check(world, new_pose, ROBOT_RADIUS):
            outcome = "collision"
            break
        path_length += np.hypot(new_pose.x - pose.x, new_pose.y - pose.y)
        pose = new_pose
        poses.append(pose)
        log.append((info.selected[0], info.selected[1], info.pivot))
        steps += 1
        while covered < len(vt.records) and (
            np.hypot(
                pose.x - vt.records[covered].pose.x,
                pose.y - vt.records[covered].pose.y,
            )
            < config.goal_radius
        ):
            covered += 1
        if np.hypot(pose.x - goal.x, pose.y - goal.y) < config.goal_radius:
            outcome = "goal_reached"
            break

    return TrialResult(
        outcome=outcome,
        subgoals_covered=covered,
        path_length=float(path_length),
        executed_poses=np.array([[p.x, p.y, p.theta] for p in poses]),
        selected_log=log,
        final_subgoal_index=planner.s,
        steps=steps,
        plan_seconds=plan_seconds,
    )
