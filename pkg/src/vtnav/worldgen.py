"""Procedural indoor worlds and synthetic teleoperation demonstrations.

Worlds are a straight corridor with rooms attached above and below, each
room connected through a single door. Demonstrations plan a grid path from
a corridor start to a room or corridor goal, smooth it, and track it with a
noisy pursuit controller, standing in for a human teleoperator.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .kinematics import Pose2D, V_MAX, VelocityCommand, W_MAX, step_pose, wrap_angle
from .sensor import render
from .subgoals import SubgoalRecord, VisualTrajectory
from .world import ROBOT_RADIUS, WorldModel, collision_check

GRID_RES = 0.1
PLAN_INFLATION = ROBOT_RADIUS + 0.27
TELEOP_SIGMA_V = 0.02
TELEOP_SIGMA_W = 0.05
GOAL_TOLERANCE = 0.15
LOOKAHEAD = 0.45


class UnreachableGoalError(RuntimeError):
    """No free grid path between the requested endpoints."""


@dataclass(frozen=True)
class WorldGenParams:
    room_count: int = 4
    corridor_width: float = 1.6
    door_width: float = 1.2
    room_width: float = 2.4
    room_depth: float = 2.4
    rng_seed: int = 0

    def __post_init__(self):
        if self.door_width <= 2 * ROBOT_RADIUS:
            raise ValueError("door_width must exceed the robot diameter")
        if self.room_count < 1:
            raise ValueError("need at least one room")


@dataclass(frozen=True)
class DemoPath:
    """Planned demonstration: poses has one more row than commands."""

    poses: np.ndarray
    commands: np.ndarray


def _wall_with_gap(x0, x1, y, gap_lo, gap_hi):
    """Horizontal wall segments from x0 to x1 at height y, leaving a gap."""
    out = []
    if gap_lo > x0:
        out.append([x0, y, gap_lo, y])
    if x1 > gap_hi:
        out.append([gap_hi, y, x1, y])
    return out


def _layout(params: WorldGenParams):
    rng = np.random.default_rng(params.rng_seed)
    cw = params.corridor_width / 2.0
    rw, rd = params.room_width, params.room_depth
    length = params.room_count * rw
    segments = [[0.0, -cw, 0.0, cw], [length, -cw, length, cw]]
    rooms = []
    for i in range(params.room_count):
        x0, x1 = i * rw, (i + 1) * rw
        side = 1.0 if rng.random() < 0.5 else -1.0
        margin = 0.2
        door_c = rng.uniform(
            x0 + margin + params.door_width / 2, x1 - margin - params.door_width / 2
        )
        gap_lo, gap_hi = door_c - params.door_width / 2, door_c + params.door_width / 2
        wall_y = side * cw
        outer_y = side * (cw + rd)
        segments += _wall_with_gap(x0, x1, wall_y, gap_lo, gap_hi)
        segments += [
            [x0, wall_y, x0, outer_y],
            [x1, wall_y, x1, outer_y],
            [x0, outer_y, x1, outer_y],
        ]
        segments.append([x0, -wall_y, x1, -wall_y])
        rooms.append(
            {"x0": x0, "x1": x1, "side": side, "door": door_c,
             "center": ((x0 + x1) / 2, side * (cw + rd / 2))}
        )
    pad = 0.1
    bounds = (
        -pad,
        -(cw + rd) - pad,
        length + pad,
        (cw + rd) + pad,
    )
    return segments, rooms, bounds, rng


def generate_world(params: WorldGenParams) -> WorldModel:
    """Connected corridor-and-rooms layout, deterministic per seed."""
    for attempt in range(8):
        p = params if attempt == 0 else WorldGenParams(
            params.room_count,
            params.corridor_width,
            params.door_width,
            params.room_width,
            params.room_depth,
            params.rng_seed + 1000 * attempt,
        )
        segments, rooms, bounds, _ = _layout(p)
        world = WorldModel(np.array(segments), bounds=bounds)
        start, goal = demo_endpoints(p)
        if grid_connected(world, (start.x, start.y), (goal.x, goal.y)):
            return world
    raise RuntimeError("world generation failed the connectivity check")


def demo_endpoints(params: WorldGenParams) -> tuple[Pose2D, Pose2D]:
    """Deterministic start (corridor west end) and goal (last room center)."""
    _, rooms, _, _ = _layout(params)
    start = Pose2D(0.5, 0.0, 0.0)
    gx, gy = rooms[-1]["center"]
    return start, Pose2D(gx, gy, 0.0)


def occupancy_grid(world: WorldModel, inflation: float) -> tuple[np.ndarray, float, float]:
    """Boolean free-space grid at GRID_RES; cells within inflation of any
    edge (or inside an obstacle) are blocked. Returns (free, x0, y0)."""
    x0, y0, x1, y1 = world.bounds
    nx = int(np.ceil((x1 - x0) / GRID_RES)) + 1
    ny = int(np.ceil((y1 - y0) / GRID_RES)) + 1
    xs = x0 + GRID_RES * np.arange(nx)
    ys = y0 + GRID_RES * np.arange(ny)
    px, py = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([px.ravel(), py.ravel()], axis=1)
    free = np.ones(len(pts), dtype=bool)
    a = world.edges[:, 0:2]
    b = world.edges[:, 2:4]
    ab = b - a
    denom = np.einsum("ej,ej->e", ab, ab)
    # Chunked point-to-segment distances to bound memory.
    chunk = 20000
    for lo in range(0, len(pts), chunk):
        p = pts[lo : lo + chunk]
        ap = p[:, None, :] - a[None, :, :]
        t = np.einsum("pej,ej->pe", ap, ab) / np.maximum(denom, 1e-30)[None, :]
        t = np.clip(t, 0.0, 1.0)
        closest = a[None, :, :] + t[..., None] * ab[None, :, :]
        d = np.hypot(p[:, None, 0] - closest[..., 0], p[:, None, 1] - closest[..., 1])
        free[lo : lo + chunk] = d.min(axis=1) > inflation
    free = free.reshape(nx, ny)
    for poly in world.obstacles:
        nxt = np.roll(poly, -1, axis=0)
        inside = np.ones((nx, ny), dtype=bool)
        for (ax, ay), (bx, by) in zip(poly, nxt):
            cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            inside &= cross >= -1e-12
        free &= ~inside
    return free, x0, y0


def _cell(x, y, x0, y0):
    return int(round((x - x0) / GRID_RES)), int(round((y - y0) / GRID_RES))


def grid_connected(world: WorldModel, a_xy, b_xy, inflation: float = PLAN_INFLATION) -> bool:
    """Flood-fill reachability between two points on the occupancy grid."""
    free, x0, y0 = occupancy_grid(world, inflation)
    ca, cb = _cell(*a_xy, x0, y0), _cell(*b_xy, x0, y0)
    for c in (ca, cb):
        if not (0 <= c[0] < free.shape[0] and 0 <= c[1] < free.shape[1] and free[c]):
            return False
    seen = np.zeros_like(free)
    stack = [ca]
    seen[ca] = True
    while stack:
        cx, cy = stack.pop()
        if (cx, cy) == cb:
            return True
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                nxt = (cx + dx, cy + dy)
                if (
                    0 <= nxt[0] < free.shape[0]
                    and 0 <= nxt[1] < free.shape[1]
                    and free[nxt]
                    and not seen[nxt]
                ):
                    seen[nxt] = True
                    stack.append(nxt)
    return False


def _astar(free: np.ndarray, start, goal) -> list[tuple[int, int]]:
    """8-connected A* over the free grid; returns the cell path."""
    if not free[start] or not free[goal]:
        raise UnreachableGoalError("endpoint blocked on the planning grid")
    nx, ny = free.shape
    moves = [
        (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
        (1, 1, np.sqrt(2)), (1, -1, np.sqrt(2)),
        (-1, 1, np.sqrt(2)), (-1, -1, np.sqrt(2)),
    ]

    def h(c):
        dx, dy = abs(c[0] - goal[0]), abs(c[1] - goal[1])
        return max(dx, dy) + (np.sqrt(2) - 1) * min(dx, dy)

    g = {start: 0.0}
    came: dict = {}
    pq = [(h(start), start)]
    closed = set()
    while pq:
        _, cur = heapq.heappop(pq)
        if cur == goal:
            path = [cur]
            while cur in came:
                cur = came[cur]
                path.append(cur)
            return path[::-1]
        if cur in closed:
            continue
        closed.add(cur)
        for dx, dy, cost in moves:
            nxt = (cur[0] + dx, cur[1] + dy)
            if not (0 <= nxt[0] < nx and 0 <= nxt[1] < ny) or not free[nxt]:
                continue
            cand = g[cur] + cost
            if cand < g.get(nxt, np.inf):
                g[nxt] = cand
                came[nxt] = cur
                heapq.heappush(pq, (cand + h(nxt), nxt))
    raise UnreachableGoalError("no grid path to goal")


def _line_free(free, a, b) -> bool:
    """Straight-line clearance between two cells, sampled sub-cell."""
    ax, ay = a
    bx, by = b
    steps = int(max(abs(bx - ax), abs(by - ay)) * 2) + 1
    for t in np.linspace(0.0, 1.0, steps + 1):
        cx = int(round(ax + t * (bx - ax)))
        cy = int(round(ay + t * (by - ay)))
        if not free[cx, cy]:
            return False
    return True


def _smooth(free, cells):
    """Greedy shortcutting of the grid path."""
    out = [cells[0]]
    i = 0
    while i < len(cells) - 1:
        j = len(cells) - 1
        while j > i + 1 and not _line_free(free, cells[i], cells[j]):
            j -= 1
        out.append(cells[j])
        i = j
    return out


def plan_demonstration(
    world: WorldModel,
    start: Pose2D,
    goal: Pose2D,
    dt: float = 0.333,
    rng: np.random.Generator | None = None,
    max_steps: int = 3000,
) -> DemoPath:
    """Grid-plan, smooth, and track a path with a noisy pursuit controller.

    Commands carry small seeded Gaussian noise so repeated demonstrations
    are diverse the way teleoperation is; the angular command is low-pass
    filtered so the recorded sequences stay smooth enough to serve as
    warm starts for the optimizer.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if np.hypot(goal.x - start.x, goal.y - start.y) <= GOAL_TOLERANCE:
        return DemoPath(np.array([[start.x, start.y, start.theta]]), np.zeros((0, 2)))
    free, x0, y0 = occupancy_grid(world, PLAN_INFLATION)
    cells = _astar(free, _cell(start.x, start.y, x0, y0), _cell(goal.x, goal.y, x0, y0))
    waypoints = np.array(
        [[x0 + c[0] * GRID_RES, y0 + c[1] * GRID_RES] for c in _smooth(free, cells)]
    )
    waypoints[-1] = [goal.x, goal.y]
    dense = [waypoints[0]]
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        n = max(int(np.hypot(*(b - a)) / 0.05), 1)
        for t in np.linspace(0, 1, n + 1)[1:]:
            dense.append(a + t * (b - a))
    dense = np.array(dense)
    pose = start
    poses = [[pose.x, pose.y, pose.theta]]
    commands = []
    nearest = 0
    w_prev = 0.0
    for _ in range(max_steps):
        if np.hypot(goal.x - pose.x, goal.y - pose.y) <= GOAL_TOLERANCE:
            break
        d = np.hypot(dense[:, 0] - pose.x, dense[:, 1] - pose.y)
        nearest = max(nearest, int(np.argmin(d[nearest : nearest + 40])) + nearest)
        look = nearest
        while look < len(dense) - 1 and d[look] < LOOKAHEAD:
            look += 1
        target = dense[look]
        err = wrap_angle(np.arctan2(target[1] - pose.y, target[0] - pose.x) - pose.theta)
        v = V_MAX * max(0.0, 1.0 - abs(err) / 1.2) + rng.normal(0.0, TELEOP_SIGMA_V)
        w = 0.5 * w_prev + 0.5 * (1.5 * err) + rng.normal(0.0, TELEOP_SIGMA_W)
        v = float(np.clip(v, 0.0, V_MAX))
        w = float(np.clip(w, -W_MAX, W_MAX))
        w_prev = w
        commands.append([v, w])
        pose = step_pose(pose, VelocityCommand(v, w), dt)
        poses.append([pose.x, pose.y, pose.theta])
    else:
        raise UnreachableGoalError("pursuit controller did not reach the goal")
    return DemoPath(np.array(poses), np.array(commands))


def record_vt(
    world: WorldModel,
    start: Pose2D,
    commands: np.ndarray,
    stride_steps: int = 8,
    dt: float = 0.333,
) -> VisualTrajectory:
    """Replay a demonstration and keep every stride-th pose as a subgoal.

    The final pose always becomes the last record; each record stores the
    commands that lead to the next record, so concatenating them recovers
    the original command list.
    """
    commands = np.asarray(commands, dtype=float)
    n = commands.shape[0]
    if n < 1:
        raise ValueError("a demonstration needs at least one command")
    pose = start
    poses = [pose]
    for k in range(n):
        pose = step_pose(pose, VelocityCommand(*commands[k]), dt)
        if collision_check(world, pose, ROBOT_RADIUS):
            raise RuntimeError(f"demonstration collides at step {k}")
        poses.append(pose)
    marks = list(range(0, n, stride_steps))
    if marks[-1] != n:
        marks.append(n)
    records = []
    for idx, m in enumerate(marks):
        nxt = marks[idx + 1] if idx + 1 < len(marks) else m
        records.append(
            SubgoalRecord(
                obs=render(world, poses[m]),
                teleop_cmds=commands[m:nxt].copy(),
                pose=poses[m],
            )
        )
    return VisualTrajectory(records, stride_steps=stride_steps, dt=dt)
