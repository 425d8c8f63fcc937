"""Panoramic range sensor: renders the robot's 360-degree observation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import Pose2D, wrap_angle_array
from .world import WorldModel, point_in_convex_polygon, ray_distances

B_COUNT = 64
R_MAX = 5.0

# robot-frame heading of each beam, beam b at 2*pi*b/B
BEAM_ANGLES = 2.0 * np.pi * np.arange(B_COUNT) / B_COUNT
# the same angles as signed offsets from the heading, in (-pi, pi]
BEAM_OFFSETS = wrap_angle_array(BEAM_ANGLES)


@dataclass(frozen=True)
class PanoramicObservation:
    """360-degree range scan. ranges[b] looks along robot-frame angle
    2*pi*b/b_count; valid ranges lie in (0, r_max]."""

    ranges: np.ndarray
    validity: np.ndarray
    b_count: int = B_COUNT
    r_max: float = R_MAX


def render(world: WorldModel, pose: Pose2D) -> PanoramicObservation:
    """Cast one ray per beam from the pose; ranges clamp to R_MAX."""
    p = np.array([pose.x, pose.y])
    for poly in world.obstacles:
        if point_in_convex_polygon(p, poly):
            raise ValueError(f"render pose ({pose.x:.3f}, {pose.y:.3f}) is inside an obstacle")
    angles = pose.theta + BEAM_ANGLES
    ranges = ray_distances(p, angles, world.edges, R_MAX)
    return PanoramicObservation(ranges, np.ones(B_COUNT, dtype=bool))


def sector_clearance(obs, center_offset: float, half_width: float) -> float:
    """Minimum valid range among beams within half_width of the robot-frame
    direction center_offset; r_max when no beam in the sector is valid."""
    if not 0.0 < half_width <= np.pi:
        raise ValueError(f"half_width must be in (0, pi], got {half_width}")
    delta = wrap_angle_array(BEAM_ANGLES - center_offset)
    sector = np.abs(delta) <= half_width + 1e-12
    mask = sector & np.asarray(obs.validity, dtype=bool)
    if not mask.any():
        return float(obs.r_max)
    return float(np.asarray(obs.ranges)[mask].min())


def frontal_clearance(obs, half_width: float) -> float:
    """Minimum valid range over the frontal sector (within half_width of
    the heading)."""
    return sector_clearance(obs, 0.0, half_width)
