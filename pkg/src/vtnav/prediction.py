"""Geometric observation prediction: warps a panoramic range scan through
virtual velocity sequences, forward from the current observation and
backward from the subgoal observation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import commands_to_array, rollout_array
from .sensor import B_COUNT, BEAM_ANGLES, R_MAX

BIN_WIDTH = 2.0 * np.pi / B_COUNT


@dataclass(frozen=True)
class PredictedObservation:
    """Predicted panoramic scan. Bins left unresolved by disocclusion are
    marked invalid and carry the r_max placeholder value."""

    ranges: np.ndarray
    validity: np.ndarray
    b_count: int = B_COUNT
    r_max: float = R_MAX


def warp_scan(
    ranges: np.ndarray, validity: np.ndarray, transforms: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Reproject one scan into the frames of many relative poses.

    transforms: (T, 3) poses of the target frames expressed in the scan
    frame. Returns (T, B) ranges and validity. Each valid source beam is a
    point; points re-bin to the nearest beam of the target frame and bin
    conflicts keep the nearest point. Pure-rotation rows keep the source
    range values bit-for-bit so zero-motion prediction is exact.
    """
    transforms = np.atleast_2d(np.asarray(transforms, dtype=float))
    t_count = transforms.shape[0]
    valid_src = np.asarray(validity, dtype=bool)
    r = np.asarray(ranges, dtype=float)[valid_src]
    a = BEAM_ANGLES[valid_src]
    px = r * np.cos(a)
    py = r * np.sin(a)

    tx = transforms[:, 0:1]
    ty = transforms[:, 1:2]
    th = transforms[:, 2:3]
    c = np.cos(th)
    s = np.sin(th)
    relx = px[None, :] - tx
    rely = py[None, :] - ty
    nx = c * relx + s * rely
    ny = -s * relx + c * rely
    dist = np.hypot(nx, ny)
    ang = np.arctan2(ny, nx)
    bins = np.round(ang / BIN_WIDTH).astype(np.int64) % B_COUNT

    rot_only = (transforms[:, 0] == 0.0) & (transforms[:, 1] == 0.0)
    if rot_only.any():
        rot_bins = (
            np.round((a[None, :] - th[rot_only]) / BIN_WIDTH).astype(np.int64)
            % B_COUNT
        )
        bins[rot_only] = rot_bins
        dist[rot_only] = r[None, :]

    dist = np.where(dist < 1e-9, np.inf, np.minimum(dist, R_MAX))
    out = np.full(t_count * B_COUNT, np.inf)
    flat = (np.arange(t_count)[:, None] * B_COUNT + bins).ravel()
    np.minimum.at(out, flat, dist.ravel())
    out = out.reshape(t_count, B_COUNT)
    valid = np.isfinite(out)
    return np.where(valid, out, R_MAX), valid


def predict_forward_batch(obs, cmds: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Forward predictions for a batch of command sequences.

    cmds: (n, L, 2). Returns ranges (n, L, B) and validity (n, L, B);
    entry (i, k) is the observation reprojected through the pose reached
    after commands 0..k of sequence i.
    """
    cmds = np.asarray(cmds, dtype=float)
    n, length = cmds.shape[0], cmds.shape[1]
    poses = rollout_array(cmds, dt).reshape(n * length, 3)
    ranges, validity = warp_scan(obs.ranges, obs.validity, poses)
    return ranges.reshape(n, length, B_COUNT), validity.reshape(n, length, B_COUNT)


def predict_forward(obs, cmds, dt: float) -> list[PredictedObservation]:
    """Predicted observations after each prefix of the command sequence."""
    arr = commands_to_array(cmds)
    ranges, validity = predict_forward_batch(obs, arr[None, :, :], dt)
    return [
        PredictedObservation(ranges[0, k], validity[0, k])
        for k in range(arr.shape[0])
    ]


def predict_backward(obs, cmds, dt: float) -> list[PredictedObservation]:
    """Predictions for the second half of a horizon, anchored at the subgoal.

    The subgoal observation is treated as the terminal observation of the
    horizon; the given commands (forward time order) are reversed and
    negated, forward-predicted from it, and the output re-reversed so that
    element k lines up with the k-th command of the input slice.
    """
    arr = commands_to_array(cmds)
    preds = predict_forward(obs, -arr[::-1], dt)
    return preds[::-1]


def predict_backward_batch(obs, cmds: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Batched predict_backward. cmds: (n, L, 2) in forward time order."""
    cmds = np.asarray(cmds, dtype=float)
    ranges, validity = predict_forward_batch(obs, -cmds[:, ::-1, :], dt)
    return ranges[:, ::-1, :], validity[:, ::-1, :]
