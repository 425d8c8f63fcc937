"""Planar unicycle kinematics, rollouts, and pose-covariance propagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Command limits (m/s, rad/s) shared by the planner, the plant, and the demos.
V_MAX = 0.5
W_MAX = 1.0

# Additive pose noise for covariance propagation: diag(m^2, m^2, rad^2).
DEFAULT_GAMMA = np.diag([1e-4, 1e-4, 1e-4])


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = theta % (2.0 * np.pi)
    if wrapped > np.pi:
        wrapped -= 2.0 * np.pi
    return wrapped


def wrap_angle_array(theta: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    wrapped = np.asarray(theta) % (2.0 * np.pi)
    return np.where(wrapped > np.pi, wrapped - 2.0 * np.pi, wrapped)


@dataclass(frozen=True)
class Pose2D:
    """Robot pose (x, y, heading) on the plane, heading in (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class VelocityCommand:
    """Linear / angular velocity pair (v, omega)."""

    v: float = 0.0
    omega: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega])


@dataclass(frozen=True)
class CommandGaussian:
    """Per-step Gaussian over commands: mean (2,) and covariance (2, 2)."""

    mu: np.ndarray
    sigma: np.ndarray


def clamp_command(v: float, omega: float) -> tuple[float, float]:
    """Clip a command to the velocity limits."""
    return (
        float(min(max(v, -V_MAX), V_MAX)),
        float(min(max(omega, -W_MAX), W_MAX)),
    )


def poses_to_array(poses) -> np.ndarray:
    """Stack a Pose2D sequence (or pass through an (K, 3) array)."""
    if isinstance(poses, np.ndarray):
        return poses
    return np.array([[p.x, p.y, p.theta] for p in poses])


def commands_to_array(cmds) -> np.ndarray:
    """Stack a VelocityCommand sequence (or pass through an (K, 2) array)."""
    if isinstance(cmds, np.ndarray):
        return cmds
    return np.array([[c.v, c.omega] for c in cmds])


def step_pose(pose: Pose2D, cmd: VelocityCommand, dt: float) -> Pose2D:
    """Euler-integrate one command: the heading used for translation is the
    heading before the step."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = pose.x + dt * np.cos(pose.theta) * cmd.v
    y = pose.y + dt * np.sin(pose.theta) * cmd.v
    theta = wrap_angle(pose.theta + dt * cmd.omega)
    return Pose2D(float(x), float(y), float(theta))


def rollout(start: Pose2D, cmds, dt: float) -> list[Pose2D]:
    """Integrate a command sequence; element k is the pose after k+1 steps."""
    poses = []
    pose = start
    for cmd in cmds:
        if not isinstance(cmd, VelocityCommand):
            cmd = VelocityCommand(float(cmd[0]), float(cmd[1]))
        pose = step_pose(pose, cmd, dt)
        poses.append(pose)
    return poses


def rollout_array(cmds: np.ndarray, dt: float) -> np.ndarray:
    """Batched robot-frame rollout from the zero pose.

    cmds: (..., K, 2) command sequences. Returns (..., K, 3) poses. Performs
    the same per-step operations as step_pose so results agree bit-for-bit.
    """
    cmds = np.asarray(cmds, dtype=float)
    out = np.empty(cmds.shape[:-1] + (3,))
    x = np.zeros(cmds.shape[:-2])
    y = np.zeros(cmds.shape[:-2])
    theta = np.zeros(cmds.shape[:-2])
    for k in range(cmds.shape[-2]):
        v = cmds[..., k, 0]
        w = cmds[..., k, 1]
        x = x + dt * np.cos(theta) * v
        y = y + dt * np.sin(theta) * v
        theta = wrap_angle_array(theta + dt * w)
        out[..., k, 0] = x
        out[..., k, 1] = y
        out[..., k, 2] = theta
    return out


def motion_jacobian(pose: Pose2D, dt: float) -> np.ndarray:
    """Jacobian of step_pose with respect to (v, omega), a 3x2 matrix."""
    c = np.cos(pose.theta)
    s = np.sin(pose.theta)
    return np.array([[dt * c, 0.0], [dt * s, 0.0], [0.0, dt]])


def propagate_covariance(
    f: np.ndarray, sigma: np.ndarray, gamma: np.ndarray
) -> np.ndarray:
    """Map a command covariance through the motion Jacobian: F Sigma F^T + Gamma.

    sigma must be symmetric PSD; gamma is the constant diagonal pose noise.
    Returns a symmetric 3x3 covariance.
    """
    f = np.asarray(f, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if sigma.shape != (2, 2):
        raise ValueError(f"sigma must be 2x2, got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, atol=1e-10):
        raise ValueError("sigma must be symmetric")
    if np.linalg.eigvalsh(sigma).min() < -1e-10:
        raise ValueError("sigma must be positive semi-definite")
    p = f @ sigma @ f.T + gamma
    return 0.5 * (p + p.T)
