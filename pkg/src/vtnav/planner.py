"""Closed-loop planning pipeline: per-cycle candidate generation, scoring,
selection, command override, and subgoal-window advance, with switches for
each ablation axis and the open-loop baseline."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .kinematics import VelocityCommand, rollout_array, wrap_angle
from .losses import default_weights, obs_distance_batch
from .policy import CemParams, generate_candidates
from .prediction import predict_forward_batch
from .selection import (
    PivotState,
    SelectionParams,
    apply_override,
    score_candidates,
    select,
    traversability_probability,
)
from .subgoals import (
    SsParams,
    VisualTrajectory,
    advance,
    advance_by_pixel_difference,
    current_window,
    reference_segment,
)

SCALE_GRID = np.linspace(0.5, 1.05, 12)
SCALE_EMA = 0.25
SCALE_WINDOW = 8

PREDICTION_MODES = ("bidirectional", "unidirectional_L8")
CONTROL_MODES = ("probabilistic_M3", "deterministic_M1")
SUBGOAL_RULES = ("virtual_velocity", "pixel_difference")
BASELINES = ("none", "open_loop")


@dataclass(frozen=True)
class MethodVariant:
    prediction: str = "bidirectional"
    control: str = "probabilistic_M3"
    subgoal_rule: str = "virtual_velocity"
    baseline: str = "none"

    def __post_init__(self):
        if self.prediction not in PREDICTION_MODES:
            raise ValueError(f"unknown prediction mode {self.prediction!r}")
        if self.control not in CONTROL_MODES:
            raise ValueError(f"unknown control mode {self.control!r}")
        if self.subgoal_rule not in SUBGOAL_RULES:
            raise ValueError(f"unknown subgoal rule {self.subgoal_rule!r}")
        if self.baseline not in BASELINES:
            raise ValueError(f"unknown baseline {self.baseline!r}")

    @property
    def m_samples(self) -> int:
        return 1 if self.control == "deterministic_M1" else 3


VARIANTS: dict[str, MethodVariant] = {
    "full": MethodVariant(),
    "unidirectional": MethodVariant(prediction="unidirectional_L8"),
    "deterministic": MethodVariant(control="deterministic_M1"),
    "pixel_subgoal": MethodVariant(subgoal_rule="pixel_difference"),
    "open_loop": MethodVariant(baseline="open_loop"),
}


@dataclass
class PlanInfo:
    """Per-cycle diagnostics logged by the trial runner."""

    subgoal_index: int
    selected: tuple[int, int]
    pivot: bool
    advanced_to: int


@dataclass
class Planner:
    """Owns the subgoal pointer and pivot latch for one trial.

    plan() consumes the current observation and returns exactly one command
    per call; the open-loop baseline replays the demonstration commands and
    never looks at the observation.
    """

    vt: VisualTrajectory
    variant: MethodVariant = field(default_factory=MethodVariant)
    cem_params: CemParams = field(default_factory=CemParams)
    ss_params: SsParams = field(default_factory=SsParams)
    sel_params: SelectionParams = field(default_factory=SelectionParams)
    dt: float = 0.333
    l_steps: int = 8
    rng_seed: int = 0

    def __post_init__(self):
        self.s = 0
        self.pivot_state = PivotState()
        self.rng = np.random.default_rng(self.rng_seed)
        self.weights = default_weights(self.l_steps)
        self._open_loop_cmds = None
        self._open_loop_step = 0
        self._scale = 1.0
        self._obs_hist = deque(maxlen=SCALE_WINDOW)
        if self.variant.baseline == "open_loop":
            self._open_loop_cmds = self.vt.all_commands()
        else:
            self._rebase(None)

    def _rebase(self, terminal: np.ndarray | None) -> None:
        """Move the dead-reckoning frame after the window anchor changes.

        The local path is the demonstration rolled out from one record
        before the new anchor (the advance test fires up to d_th short of
        it), in a frame the planner derives purely from the recorded
        commands. The dead-reckoned pose is carried over by the exact
        transform between the old and new frames, so command odometry
        stays continuous for the whole trial.

        terminal is the fired candidate's robot-frame terminal pose, whose
        inverse places the robot at the anchor record the way the advance
        test certified. Command odometry is exact only when commands
        execute at face value; wheel slippage scales the executed motion,
        so the integrated pose runs ahead of the robot and the reference
        consumption with it. The image-grounded fix is adopted at every
        advance to cancel that bias before it compounds; an estimate
        drastically far from the odometry can only come from a vacuous
        advance (a near-null candidate passes the test without saying
        anything), so those are rejected."""
        offsets = self.vt.cmd_offsets()
        old_base_cmd = getattr(self, "_path_base", None)
        old_local = getattr(self, "_local", None)
        base = max(self.s - 1, 0)
        self._path_base = int(offsets[base])
        cmds = self.vt.all_commands()[self._path_base :]
        after = rollout_array(cmds, self.dt) if cmds.size else np.zeros((0, 3))
        self._path = np.vstack([np.zeros((1, 3)), after])
        anchor = int(offsets[self.s]) - self._path_base
        sx, sy, sth = self._path[anchor]
        if old_local is None:
            self._local = np.array([0.0, 0.0, 0.0])
        else:
            px, py, pth = rollout_array(
                self.vt.all_commands()[old_base_cmd : self._path_base], self.dt
            )[-1] if self._path_base > old_base_cmd else (0.0, 0.0, 0.0)
            dx = old_local[0] - px
            dy = old_local[1] - py
            c, sn = np.cos(pth), np.sin(pth)
            self._local = np.array(
                [
                    c * dx + sn * dy,
                    -sn * dx + c * dy,
                    wrap_angle(old_local[2] - pth),
                ]
            )
        if terminal is not None and old_local is not None:
            tx, ty, tth = float(terminal[0]), float(terminal[1]), float(terminal[2])
            qx = -(np.cos(tth) * tx + np.sin(tth) * ty)
            qy = -(-np.sin(tth) * tx + np.cos(tth) * ty)
            ix = sx + np.cos(sth) * qx - np.sin(sth) * qy
            iy = sy + np.sin(sth) * qx + np.cos(sth) * qy
            ith = wrap_angle(sth - tth)
            gap = float(np.hypot(ix - self._local[0], iy - self._local[1]))
            if gap <= 3.0 * self.ss_params.d_th:
                self._local[0] = ix
                self._local[1] = iy
            dth = abs(wrap_angle(ith - self._local[2]))
            if dth <= 3.0 * self.ss_params.theta_th:
                self._local[2] = ith
        d = np.hypot(
            self._path[:, 0] - self._local[0], self._path[:, 1] - self._local[1]
        )
        self._near = int(np.argmin(d[: anchor + 25]))

    def _update_scale(self, current_obs) -> None:
        """Track the plant's executed-to-commanded ratio from observations.

        The incoming observation is matched against predictions of the
        observation from several cycles back, warped through the commands
        issued in between at trial scales; the best-fitting scale is folded
        into a running estimate. Wheel slippage attenuates every executed
        command, so without this correction the dead reckoning, and with it
        the reference consumption, runs ahead of the robot in proportion to
        the slip. A multi-step baseline is needed because one cycle moves
        the panorama less than a beam and the match cannot rank scales."""
        if len(self._obs_hist) < SCALE_WINDOW:
            return
        base_obs = self._obs_hist[0][0]
        cmds = np.array([c for _, c in self._obs_hist])
        if (np.abs(cmds[:, 0]).sum() + np.abs(cmds[:, 1]).sum()) * self.dt < 0.1:
            return
        scaled = SCALE_GRID[:, None, None] * cmds[None, :, :]
        ranges, validity = predict_forward_batch(base_obs, scaled, self.dt)
        d = obs_distance_batch(
            ranges[:, -1],
            validity[:, -1],
            np.asarray(current_obs.ranges)[None, :],
            np.asarray(current_obs.validity)[None, :],
            float(base_obs.r_max),
        )
        k = float(SCALE_GRID[int(np.argmin(d))])
        self._scale += SCALE_EMA * (k - self._scale)

    def _project_progress(self) -> int:
        """Index into all_commands() of the first demonstration command the
        robot has not yet covered, from the nearest local-path vertex to
        the dead-reckoned pose. The search window around the previous
        match keeps the projection from jumping across path self-overlaps."""
        lo = max(self._near - 8, 0)
        hi = min(self._near + 25, len(self._path))
        seg = self._path[lo:hi]
        d = np.hypot(seg[:, 0] - self._local[0], seg[:, 1] - self._local[1])
        self._near = lo + int(np.argmin(d))
        return self._path_base + self._near

    def plan(self, current_obs) -> tuple[VelocityCommand, PlanInfo]:
        if self._open_loop_cmds is not None:
            k = self._open_loop_step
            if k >= self._open_loop_cmds.shape[0]:
                cmd = VelocityCommand(0.0, 0.0)
            else:
                cmd = VelocityCommand(*self._open_loop_cmds[k])
            self._open_loop_step += 1
            return cmd, PlanInfo(self.s, (-1, -1), False, self.s)

        self._update_scale(current_obs)
        horizon = 2 * self.l_steps
        window = current_window(self.vt, self.s, self.ss_params)
        subgoal_obs = [self.vt.records[r].obs for r in window]
        # The reference is consumed by the commands already executed since
        # the window anchor changed, so it always describes the remaining
        # leg and ends at the subgoal.
        start = self._project_progress()
        align = wrap_angle(self._local[2] - self._path[self._near, 2])
        refs = [
            reference_segment(self.vt, self.s, k, horizon, start=start, align=align)
            for k in range(len(window))
        ]
        bidirectional = self.variant.prediction == "bidirectional"
        use_likelihood = self.variant.control == "probabilistic_M3"
        candidates = generate_candidates(
            current_obs,
            subgoal_obs,
            refs,
            self.cem_params,
            self.dt,
            self.l_steps,
            rng=self.rng,
            m_samples=self.variant.m_samples,
            bidirectional=bidirectional,
            use_likelihood=use_likelihood,
            weights=self.weights,
        )
        score_candidates(candidates, subgoal_obs, self.sel_params)
        i_star, j_star = select(candidates)
        chosen = next(
            c
            for c in candidates
            if (c.subgoal_index, c.sample_index) == (i_star, j_star)
        )
        current_trav = traversability_probability(current_obs, self.sel_params)
        cmd, self.pivot_state = apply_override(
            chosen, current_trav, self.dt, self.sel_params, self.pivot_state
        )
        pivot = self.pivot_state.active
        prev_s = self.s
        if self.variant.subgoal_rule == "virtual_velocity":
            self.s = advance(candidates, self.s, self.vt, self.ss_params)
        else:
            nxt = window[0]
            if advance_by_pixel_difference(current_obs, self.vt.records[nxt].obs):
                self.s = nxt
        if self.s != prev_s:
            terminal = None
            if self.variant.subgoal_rule == "virtual_velocity":
                fired_k = window.index(self.s)
                for cand in candidates:
                    if cand.subgoal_index == fired_k and cand.sample_index == 0:
                        terminal = cand.terminal_pose
                        break
            self._rebase(terminal)
        x, y, th = self._local
        sv = self._scale * cmd.v
        sw = self._scale * cmd.omega
        self._local = np.array(
            [
                x + self.dt * np.cos(th) * sv,
                y + self.dt * np.sin(th) * sv,
                wrap_angle(th + self.dt * sw),
            ]
        )
        self._obs_hist.append((current_obs, np.array([cmd.v, cmd.omega])))
        return cmd, PlanInfo(
            subgoal_index=window[0],
            selected=(i_star, j_star),
            pivot=bool(pivot),
            advanced_to=self.s,
        )
