"""Unit tests for geometric observation prediction."""

import numpy as np
import pytest

from vtnav.kinematics import Pose2D, VelocityCommand, rollout
from vtnav.prediction import (
    predict_backward,
    predict_backward_batch,
    predict_forward,
    predict_forward_batch,
)
from vtnav.sensor import B_COUNT, R_MAX, render
from vtnav.world import OBSTACLE_SHAPES, WorldModel, box_segments, collision_check

DT = 0.333
L = 8
ONE_BIN_OMEGA = (2 * np.pi / B_COUNT) / DT


def corridor_world(length=8.0, width=1.4):
    half = length / 2
    return WorldModel(box_segments(-half, -width / 2, half, width / 2))


def cluttered_world(rng, keep_clear_y=None):
    world = WorldModel(box_segments(-6, -6, 6, 6))
    for _ in range(5):
        name = rng.choice(list(OBSTACLE_SHAPES))
        center = rng.uniform(-5, 5, size=2)
        if keep_clear_y is not None and abs(center[1]) < keep_clear_y:
            continue
        world = world.with_obstacle(OBSTACLE_SHAPES[name] * rng.integers(1, 4) + center)
    return world


class TestForward:
    def test_identity_on_zero_commands(self):
        world = corridor_world()
        obs = render(world, Pose2D(0, 0, 0))
        preds = predict_forward(obs, [VelocityCommand(0, 0)] * L, DT)
        assert len(preds) == L
        for p in preds:
            assert np.array_equal(p.ranges, obs.ranges)
            assert np.all(p.validity)

    def test_one_bin_rotation_is_exact_shift(self):
        world = corridor_world()
        obs = render(world, Pose2D(0.5, 0.1, 0))
        preds = predict_forward(obs, [VelocityCommand(0, ONE_BIN_OMEGA)], DT)
        assert np.array_equal(preds[0].ranges, np.roll(obs.ranges, -1))
        assert np.all(preds[0].validity)

    def test_translation_matches_rerender(self):
        # oracle: render the world at the true rolled-out pose
        world = corridor_world()
        start = Pose2D(-1.0, 0.0, 0.0)
        cmds = [VelocityCommand(0.5, 0)] * 3
        obs = render(world, start)
        preds = predict_forward(obs, cmds, DT)
        true_pose = rollout(start, cmds, DT)[-1]
        oracle = render(world, true_pose)
        joint = preds[-1].validity & oracle.validity
        err = np.abs(preds[-1].ranges[joint] - oracle.ranges[joint])
        assert np.median(err) < 0.05 * R_MAX

    def test_degradation_grows_with_horizon(self):
        # disocclusion accumulates: re-render error at 2L >= error at L
        errs = {L: [], 2 * L: []}
        count = 0
        seed = 0
        while count < 120:
            seed += 1
            rng = np.random.default_rng(seed)
            world = cluttered_world(rng, keep_clear_y=0.8)
            start = Pose2D(-2.8, rng.uniform(-0.2, 0.2), rng.uniform(-0.1, 0.1))
            cmds = [VelocityCommand(0.5, 0)] * (2 * L)
            poses = rollout(start, cmds, DT)
            if any(collision_check(world, p, 0.25) for p in poses):
                continue
            obs = render(world, start)
            preds = predict_forward(obs, cmds, DT)
            for step in (L, 2 * L):
                oracle = render(world, poses[step - 1])
                joint = preds[step - 1].validity & oracle.validity
                if joint.sum() < 8:
                    break
                errs[step].append(
                    np.median(np.abs(preds[step - 1].ranges[joint] - oracle.ranges[joint]))
                )
            else:
                count += 1
        assert count >= 100
        assert np.median(errs[2 * L]) >= np.median(errs[L])

    def test_batch_matches_scalar(self):
        world = corridor_world()
        obs = render(world, Pose2D(0.3, -0.1, 0.4))
        rng = np.random.default_rng(9)
        cmds = rng.uniform([-0.5, -1.0], [0.5, 1.0], size=(12, L, 2))
        ranges, validity = predict_forward_batch(obs, cmds, DT)
        for i in range(12):
            preds = predict_forward(obs, cmds[i], DT)
            for k in range(L):
                assert np.array_equal(ranges[i, k], preds[k].ranges)
                assert np.array_equal(validity[i, k], preds[k].validity)


class TestBackward:
    def test_identity_on_zero_commands(self):
        world = corridor_world()
        goal_obs = render(world, Pose2D(1.0, 0.2, 0.5))
        preds = predict_backward(goal_obs, [VelocityCommand(0, 0)] * L, DT)
        assert len(preds) == L
        for p in preds:
            assert np.array_equal(p.ranges, goal_obs.ranges)

    def test_single_rotation_shifts_opposite_to_forward(self):
        world = corridor_world()
        obs = render(world, Pose2D(0.5, 0.1, 0))
        fwd = predict_forward(obs, [VelocityCommand(0, ONE_BIN_OMEGA)], DT)
        bwd = predict_backward(obs, [VelocityCommand(0, ONE_BIN_OMEGA)], DT)
        assert np.array_equal(fwd[0].ranges, np.roll(obs.ranges, -1))
        assert np.array_equal(bwd[-1].ranges, np.roll(obs.ranges, 1))

    def test_round_trip_meets_in_the_middle(self):
        # both directions predict the same mid-horizon time from a
        # consistent pair of endpoint observations
        world = WorldModel(box_segments(-6, -3, 6, 3))
        world = world.with_obstacle(OBSTACLE_SHAPES["box"] * 3 + [2.0, 1.8])
        start = Pose2D(-2.0, -0.5, 0.05)
        rng = np.random.default_rng(4)
        cmds = [
            VelocityCommand(0.35 + 0.1 * rng.random(), 0.2 * rng.standard_normal())
            for _ in range(2 * L)
        ]
        poses = rollout(start, cmds, DT)
        assert not any(collision_check(world, p, 0.2) for p in poses)
        start_obs = render(world, start)
        goal_obs = render(world, poses[-1])
        fwd = predict_forward(start_obs, cmds[:L], DT)
        bwd = predict_backward(goal_obs, cmds[L:], DT)
        joint = fwd[L - 1].validity & bwd[0].validity
        assert joint.sum() >= 8
        err = np.abs(fwd[L - 1].ranges[joint] - bwd[0].ranges[joint])
        assert np.median(err) < 0.10 * R_MAX

    def test_batch_matches_scalar(self):
        world = corridor_world()
        obs = render(world, Pose2D(0.5, 0.0, -0.2))
        rng = np.random.default_rng(13)
        cmds = rng.uniform([-0.5, -1.0], [0.5, 1.0], size=(6, L, 2))
        ranges, validity = predict_backward_batch(obs, cmds, DT)
        for i in range(6):
            preds = predict_backward(obs, cmds[i], DT)
            for k in range(L):
                assert np.array_equal(ranges[i, k], preds[k].ranges)
                assert np.array_equal(validity[i, k], preds[k].validity)


def test_split_horizon_halves_worst_case_reach():
    # neither direction of a split horizon warps farther than a full-horizon
    # unidirectional prediction would
    full = rollout(Pose2D(), [VelocityCommand(0.5, 0)] * (2 * L), DT)
    half = rollout(Pose2D(), [VelocityCommand(0.5, 0)] * L, DT)
    reach = lambda p: np.hypot(p.x, p.y)
    assert reach(half[-1]) <= reach(full[-1])
    assert reach(half[-1]) == pytest.approx(reach(full[-1]) / 2)
