"""2D worlds: wall segments, convex polygonal obstacles, ray casting,
collision tests, slippage execution, and obstacle placement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import Pose2D, VelocityCommand, step_pose

ROBOT_RADIUS = 0.18
GOAL_RADIUS = 0.5

# Unit obstacle footprints (convex, extents 0.2-0.6 m before scaling).
OBSTACLE_SHAPES: dict[str, np.ndarray] = {
    "box": np.array([[-0.15, -0.15], [0.15, -0.15], [0.15, 0.15], [-0.15, 0.15]]),
    "slab": np.array([[-0.25, -0.1], [0.25, -0.1], [0.25, 0.1], [-0.25, 0.1]]),
    "hex": 0.175
    * np.array(
        [[np.cos(a), np.sin(a)] for a in np.linspace(0, 2 * np.pi, 7)[:-1]]
    ),
    "wedge": np.array([[-0.2, -0.15], [0.3, 0.0], [-0.2, 0.15]]),
}

OBSTACLE_SCALES = (1, 3, 5, 7)
OBSTACLE_DISTANCES = (0.2, 0.5, 1.0, 1.5)


class PlacementError(RuntimeError):
    """No valid obstacle placement found."""


@dataclass
class WorldModel:
    """Static walls plus convex obstacles inside a bounding rectangle.

    edges stacks wall segments and obstacle boundary edges as rows
    (x1, y1, x2, y2) for vectorized ray casting.
    """

    segments: np.ndarray
    obstacles: list[np.ndarray] = field(default_factory=list)
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 10.0, 10.0)
    edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.segments = np.asarray(self.segments, dtype=float).reshape(-1, 4)
        self.obstacles = [np.asarray(o, dtype=float) for o in self.obstacles]
        rows = [self.segments]
        for poly in self.obstacles:
            nxt = np.roll(poly, -1, axis=0)
            rows.append(np.hstack([poly, nxt]))
        self.edges = np.vstack(rows) if rows else np.zeros((0, 4))

    def with_obstacle(self, poly: np.ndarray) -> "WorldModel":
        return WorldModel(
            self.segments.copy(), self.obstacles + [np.asarray(poly)], self.bounds
        )


def box_segments(xmin, ymin, xmax, ymax) -> np.ndarray:
    """Four wall segments enclosing a rectangle."""
    return np.array(
        [
            [xmin, ymin, xmax, ymin],
            [xmax, ymin, xmax, ymax],
            [xmax, ymax, xmin, ymax],
            [xmin, ymax, xmin, ymin],
        ]
    )


def ray_distances(
    origin: np.ndarray, angles: np.ndarray, edges: np.ndarray, r_max: float
) -> np.ndarray:
    """Distance from origin along each angle to the nearest edge, clamped
    to r_max. angles (B,), edges (E, 4); returns (B,)."""
    b = angles.shape[0]
    if edges.shape[0] == 0:
        return np.full(b, r_max)
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    px = edges[None, :, 0] - origin[0]
    py = edges[None, :, 1] - origin[1]
    ex = (edges[:, 2] - edges[:, 0])[None, :]
    ey = (edges[:, 3] - edges[:, 1])[None, :]
    denom = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (px * ey - py * ex) / denom
        s = (px * dy - py * dx) / denom
    hit = (np.abs(denom) > 1e-12) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0)
    t = np.where(hit, t, np.inf)
    return np.minimum(t.min(axis=1), r_max)


def point_segment_distances(point: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Distance from a point to each segment row of edges."""
    if edges.shape[0] == 0:
        return np.full(0, np.inf)
    a = edges[:, 0:2]
    b = edges[:, 2:4]
    ab = b - a
    ap = point[None, :] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    tproj = np.where(denom > 0, np.einsum("ij,ij->i", ap, ab) / np.maximum(denom, 1e-30), 0.0)
    tproj = np.clip(tproj, 0.0, 1.0)
    closest = a + tproj[:, None] * ab
    return np.hypot(*(point[None, :] - closest).T)


def point_in_convex_polygon(point: np.ndarray, poly: np.ndarray) -> bool:
    """Containment test; boundary counts as inside."""
    nxt = np.roll(poly, -1, axis=0)
    cross = (nxt[:, 0] - poly[:, 0]) * (point[1] - poly[:, 1]) - (
        nxt[:, 1] - poly[:, 1]
    ) * (point[0] - poly[:, 0])
    return bool(np.all(cross >= -1e-12) or np.all(cross <= 1e-12))


def collision_check(world: WorldModel, pose: Pose2D, robot_radius: float) -> bool:
    """True iff the robot disc touches a wall or an obstacle."""
    p = np.array([pose.x, pose.y])
    for poly in world.obstacles:
        if point_in_convex_polygon(p, poly):
            return True
    if robot_radius <= 0:
        return False
    d = point_segment_distances(p, world.edges)
    return bool(d.size and d.min() < robot_radius)


def execute_step(
    state: Pose2D, cmd: VelocityCommand, slippage: float, dt: float
) -> Pose2D:
    """Plant step: only the (1 - slippage) fraction of the command is realized."""
    if not 0.0 <= slippage < 1.0:
        raise ValueError(f"slippage must be in [0, 1), got {slippage}")
    scaled = VelocityCommand((1.0 - slippage) * cmd.v, (1.0 - slippage) * cmd.omega)
    return step_pose(state, scaled, dt)


def scaled_shape(shape_name: str, scale: float) -> np.ndarray:
    return OBSTACLE_SHAPES[shape_name] * float(scale)


def polygon_clear_of(poly: np.ndarray, point: np.ndarray, margin: float) -> bool:
    """True when the polygon keeps at least margin away from the point."""
    if point_in_convex_polygon(point, poly):
        return False
    nxt = np.roll(poly, -1, axis=0)
    edges = np.hstack([poly, nxt])
    return bool(point_segment_distances(point, edges).min() >= margin)


@dataclass(frozen=True)
class ObstacleSpec:
    """Obstacle drop request: shape scaled by scale, centered on a circle of
    radius distance around the chosen subgoal's recorded position."""

    shape_name: str
    scale: int
    subgoal_index: int
    distance: float
    angle_on_circle: float


def place_obstacle(
    world: WorldModel,
    vt,
    spec: ObstacleSpec,
    rng: np.random.Generator | None = None,
    keepout: float = GOAL_RADIUS,
) -> WorldModel:
    """Drop the scaled shape on the circle around the subgoal position.

    A placement that comes within keepout of the trajectory start or goal
    position is resampled at a fresh angle (up to 32 draws) so both stay
    reachable. Raises PlacementError when every draw overlaps.
    """
    if spec.scale not in OBSTACLE_SCALES:
        raise ValueError(f"scale must be one of {OBSTACLE_SCALES}")
    if spec.distance not in OBSTACLE_DISTANCES:
        raise ValueError(f"distance must be one of {OBSTACLE_DISTANCES}")
    center_pose = vt.records[spec.subgoal_index].pose
    anchor = np.array([center_pose.x, center_pose.y])
    start = vt.records[0].pose
    goal = vt.records[-1].pose
    start_pt = np.array([start.x, start.y])
    goal_pt = np.array([goal.x, goal.y])
    base = scaled_shape(spec.shape_name, spec.scale)
    angle = spec.angle_on_circle
    for _ in range(33):
        center = anchor + spec.distance * np.array([np.cos(angle), np.sin(angle)])
        poly = base + center
        if polygon_clear_of(poly, start_pt, keepout) and polygon_clear_of(
            poly, goal_pt, keepout
        ):
            return world.with_obstacle(poly)
        if rng is None:
            break
        angle = rng.uniform(-np.pi, np.pi)
    raise PlacementError(
        f"no clear placement for {spec.shape_name} x{spec.scale} near "
        f"subgoal {spec.subgoal_index}"
    )
