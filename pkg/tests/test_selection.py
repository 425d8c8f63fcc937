"""Unit tests for candidate scoring, selection, and the command override."""

import numpy as np
import pytest

from vtnav.kinematics import Pose2D, VelocityCommand
from vtnav.losses import default_weights
from vtnav.policy import Candidate, CemParams, generate_candidates
from vtnav.prediction import PredictedObservation
from vtnav.selection import (
    PivotState,
    SelectionParams,
    apply_override,
    limit_velocity,
    reachability_score,
    score_candidates,
    select,
    traversability_probability,
    traversability_score,
)
from vtnav.sensor import B_COUNT, R_MAX, render
from vtnav.world import WorldModel, box_segments

DT = 0.333
L = 8


def logistic_oracle(clearance, d_safe, scale):
    """Independent scalar evaluation of the clearance logistic."""
    import math

    return 1.0 / (1.0 + math.exp(-(clearance - d_safe) / scale))


def pred_with_uniform_range(r, invalid=()):
    ranges = np.full(B_COUNT, float(r))
    validity = np.ones(B_COUNT, dtype=bool)
    for b in invalid:
        validity[b] = False
        ranges[b] = R_MAX
    return PredictedObservation(ranges, validity)


def make_candidate(i, j, reac=np.nan, trav=np.nan, terminal=(0.0, 0.0, 0.0),
                   rotation=0.0, first_cmd=(0.1, 0.0)):
    cmds = np.zeros((2 * L, 2))
    cmds[0] = first_cmd
    ranges = np.full((L, B_COUNT), R_MAX)
    validity = np.ones((L, B_COUNT), dtype=bool)
    return Candidate(
        subgoal_index=i,
        sample_index=j,
        cmds=cmds,
        fwd_ranges=ranges,
        fwd_validity=validity,
        bwd_ranges=ranges.copy(),
        bwd_validity=validity.copy(),
        terminal_pose=np.array(terminal),
        total_rotation=rotation,
        score_reac=reac,
        score_trav=trav,
    )


class TestReachability:
    def test_identical_mids_zero(self):
        a = pred_with_uniform_range(2.5)
        assert reachability_score(a, a) == 0.0

    def test_squares_observation_distance(self):
        a = pred_with_uniform_range(2.0)
        b = pred_with_uniform_range(3.0)
        assert reachability_score(a, b) == pytest.approx((1.0 / R_MAX) ** 2, abs=1e-15)

    def test_bounded_below_penalty(self):
        rng = np.random.default_rng(0)
        params = SelectionParams()
        for _ in range(50):
            a = PredictedObservation(
                rng.uniform(0, R_MAX, B_COUNT), rng.random(B_COUNT) < 0.9
            )
            b = PredictedObservation(
                rng.uniform(0, R_MAX, B_COUNT), rng.random(B_COUNT) < 0.9
            )
            assert reachability_score(a, b) <= 1.0 < params.p_trav_penalty


class TestTraversabilityProbability:
    def test_midpoint_at_safety_distance(self):
        params = SelectionParams()
        pred = pred_with_uniform_range(params.d_safe)
        assert traversability_probability(pred, params) == pytest.approx(0.5, abs=1e-12)

    def test_saturates_at_max_range(self):
        params = SelectionParams()
        pred = pred_with_uniform_range(R_MAX)
        assert traversability_probability(pred, params) > 0.999

    def test_low_clearance_matches_scalar_oracle(self):
        params = SelectionParams()
        pred = pred_with_uniform_range(0.1)
        expected = logistic_oracle(0.1, params.d_safe, params.logistic_scale)
        assert expected < 0.02
        assert traversability_probability(pred, params) == pytest.approx(
            expected, abs=1e-12
        )


class TestTraversabilityScore:
    def test_below_threshold_penalized(self):
        params = SelectionParams()
        assert traversability_score(0.49, params) == 100.0

    def test_boundary_passes(self):
        params = SelectionParams()
        assert traversability_score(0.5, params) == 0.0

    def test_certain_passes(self):
        params = SelectionParams()
        assert traversability_score(1.0, params) == 0.0


class TestSelect:
    def test_picks_minimum_total(self):
        cands = [
            make_candidate(0, 0, reac=0.3, trav=0.0),
            make_candidate(0, 1, reac=0.1, trav=0.0),
            make_candidate(0, 2, reac=0.2, trav=100.0),
        ]
        assert select(cands) == (0, 1)

    def test_all_penalized_falls_back_to_reachability(self):
        cands = [
            make_candidate(0, 0, reac=0.3, trav=100.0),
            make_candidate(1, 0, reac=0.05, trav=100.0),
            make_candidate(2, 0, reac=0.2, trav=100.0),
        ]
        assert select(cands) == (1, 0)

    def test_tie_prefers_lower_subgoal_then_sample(self):
        cands = [
            make_candidate(1, 0, reac=0.25, trav=0.0),
            make_candidate(0, 2, reac=0.25, trav=0.0),
        ]
        assert select(cands) == (0, 2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            select([])

    def test_penalty_dominates_over_random_score_sets(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = rng.integers(2, 10)
            cands = [
                make_candidate(
                    int(k // 3),
                    int(k % 3),
                    reac=float(rng.uniform(0, 1)),
                    trav=100.0 if rng.random() < 0.5 else 0.0,
                )
                for k in range(n)
            ]
            i, j = select(cands)
            picked = next(
                c for c in cands if (c.subgoal_index, c.sample_index) == (i, j)
            )
            if any(c.score_trav == 0.0 for c in cands):
                assert picked.score_trav == 0.0

    def test_invariant_to_affine_rescale_of_reachability(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            cands = [
                make_candidate(k, 0, reac=float(rng.uniform(0, 1)), trav=0.0)
                for k in range(5)
            ]
            before = select(cands)
            for c in cands:
                c.score_reac = 0.001 + 0.37 * c.score_reac
            assert select(cands) == before


class TestScoreCandidates:
    def test_fills_scores_on_real_candidates(self):
        world = WorldModel(box_segments(-4, -0.7, 4, 0.7))
        obs = render(world, Pose2D(-1, 0, 0))
        subgoals = [render(world, Pose2D(-0.5, 0, 0)), render(world, Pose2D(0, 0, 0))]
        refs = [np.zeros((2 * L, 2)), np.zeros((2 * L, 2))]
        cands = generate_candidates(
            obs, subgoals, refs, CemParams(rng_seed=0), DT, L,
            rng=np.random.default_rng(0),
        )
        score_candidates(cands, subgoals, SelectionParams())
        for c in cands:
            assert np.isfinite(c.score_reac) and c.score_reac >= 0.0
            assert c.score_trav in (0.0, 100.0)

    def test_unidirectional_scores_against_subgoal(self):
        world = WorldModel(box_segments(-6, -6, 6, 6))
        obs = render(world, Pose2D(0, 0, 0))
        sg = render(world, Pose2D(0.5, 0, 0))
        cand = make_candidate(0, 0)
        cand.bwd_ranges = None
        cand.bwd_validity = None
        score_candidates([cand], [sg], SelectionParams())
        fwd_mid = PredictedObservation(cand.fwd_ranges[-1], cand.fwd_validity[-1])
        assert cand.score_reac == pytest.approx(
            reachability_score(fwd_mid, sg), abs=1e-15
        )


class TestLimitVelocity:
    def test_preserves_turning_radius(self):
        out = limit_velocity(VelocityCommand(0.4, 0.8))
        assert out.v == pytest.approx(0.2, abs=1e-15)
        assert out.omega == pytest.approx(0.4, abs=1e-15)

    def test_straight_line(self):
        out = limit_velocity(VelocityCommand(0.5, 0.0))
        assert (out.v, out.omega) == (0.2, 0.0)

    def test_below_threshold_untouched(self):
        cmd = VelocityCommand(0.1, 0.9)
        assert limit_velocity(cmd) is cmd

    def test_radius_and_signs_over_random_commands(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            v = float(rng.uniform(-0.5, 0.5))
            w = float(rng.uniform(-1.0, 1.0))
            out = limit_velocity(VelocityCommand(v, w))
            assert abs(out.v) <= 0.2 + 1e-15
            assert np.sign(out.v) == np.sign(v)
            assert np.sign(out.omega) == np.sign(w)
            if abs(v) > 0.2 and w != 0.0:
                assert out.v / out.omega == pytest.approx(v / w, abs=1e-12)


class TestApplyOverride:
    def test_traversable_passes_first_command(self):
        cand = make_candidate(0, 0, first_cmd=(0.15, 0.1))
        cmd, state = apply_override(cand, 0.9, DT, SelectionParams())
        assert (cmd.v, cmd.omega) == (0.15, 0.1)
        assert not state.active

    def test_traversable_limits_fast_command(self):
        cand = make_candidate(0, 0, first_cmd=(0.4, 0.8))
        cmd, _ = apply_override(cand, 0.9, DT, SelectionParams())
        assert (cmd.v, cmd.omega) == pytest.approx((0.2, 0.4), abs=1e-15)

    def test_blocked_pivots_toward_positive_rotation(self):
        cand = make_candidate(0, 0, rotation=1.2)
        cmd, state = apply_override(cand, 0.3, DT, SelectionParams())
        assert (cmd.v, cmd.omega) == (0.0, 0.5)
        assert state.active and state.direction == 0.5

    def test_blocked_pivots_toward_negative_rotation(self):
        cand = make_candidate(0, 0, rotation=-0.2)
        cmd, state = apply_override(cand, 0.3, DT, SelectionParams())
        assert (cmd.v, cmd.omega) == (0.0, -0.5)

    def test_latch_holds_for_quarter_turn(self):
        params = SelectionParams()
        cand = make_candidate(0, 0, rotation=0.5, first_cmd=(0.1, 0.0))
        cmd, state = apply_override(cand, 0.3, DT, params)
        emissions = 1
        # Current view becomes traversable immediately, but the pivot must
        # latch until a quarter turn: ceil((pi/2) / (0.5 * 0.333)) emissions.
        while True:
            cmd, state = apply_override(cand, 0.9, DT, params, state)
            if cmd.v != 0.0:
                break
            emissions += 1
            assert emissions < 50
        assert emissions == 10
        assert not state.active

    def test_latch_minimum_three_steps(self):
        # Even if the release threshold were already met, fewer than three
        # pivot steps never release; with dt large one step exceeds pi/2.
        params = SelectionParams()
        cand = make_candidate(0, 0, rotation=1.0)
        big_dt = 4.0
        cmd, state = apply_override(cand, 0.3, big_dt, params)
        emissions = 1
        while True:
            cmd, state = apply_override(cand, 0.9, big_dt, params, state)
            if cmd.v != 0.0:
                break
            emissions += 1
            assert emissions < 10
        assert emissions == 3

    def test_output_is_always_limited_cmd_or_pivot(self):
        rng = np.random.default_rng(5)
        params = SelectionParams()
        state = None
        for _ in range(500):
            cand = make_candidate(
                0,
                0,
                rotation=float(rng.uniform(-3, 3)),
                first_cmd=(float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-1, 1))),
            )
            trav = float(rng.random())
            cmd, state = apply_override(cand, trav, DT, params, state)
            is_pivot = (cmd.v, abs(cmd.omega)) == (0.0, 0.5)
            limited = limit_velocity(
                VelocityCommand(float(cand.cmds[0, 0]), float(cand.cmds[0, 1]))
            )
            is_limited_first = (cmd.v, cmd.omega) == (limited.v, limited.omega)
            assert is_pivot or is_limited_first
