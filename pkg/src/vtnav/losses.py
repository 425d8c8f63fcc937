"""Planning objectives: bidirectional/unidirectional image losses, trajectory
likelihood, smoothness, imitation and traversability losses, and the
composite objective.

Scalar entry points define the contracts; *_batch variants evaluate many
candidate command sequences at once and are tested against the scalar path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import poses_to_array, wrap_angle_array

KAPPA1 = 0.001
KAPPA2 = 1.0
MID_WEIGHT = 5.0


@dataclass(frozen=True)
class LossWeights:
    """Per-step weights w (length 2L, w_L = 5.0 in 1-based indexing) plus the
    composite coefficients."""

    w: np.ndarray
    kappa1: float = KAPPA1
    kappa2: float = KAPPA2


def default_weights(l_steps: int) -> LossWeights:
    w = np.ones(2 * l_steps)
    w[l_steps - 1] = MID_WEIGHT
    return LossWeights(w)


def obs_distance(a, b) -> float:
    """Mean absolute range difference over jointly valid beams, normalized
    by the sensor range; 1.0 when the validity masks share no beam."""
    return float(
        obs_distance_batch(
            np.asarray(a.ranges), np.asarray(a.validity),
            np.asarray(b.ranges), np.asarray(b.validity),
            float(a.r_max),
        )
    )


def obs_distance_batch(ra, va, rb, vb, r_max: float) -> np.ndarray:
    """Broadcasting obs_distance over leading axes of (..., B) arrays."""
    joint = va & vb
    count = joint.sum(axis=-1)
    total = np.where(joint, np.abs(ra - rb), 0.0).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = total / (count * r_max)
    return np.where(count > 0, d, 1.0)


def bidirectional_image_loss(fwd, bwd, weights: LossWeights) -> float:
    """Anchor each direction's mid-horizon prediction against every step of
    the other direction; both sums share the emphasized mid weight."""
    l_steps = len(fwd)
    fr = np.stack([p.ranges for p in fwd])
    fv = np.stack([p.validity for p in fwd])
    br = np.stack([p.ranges for p in bwd])
    bv = np.stack([p.validity for p in bwd])
    r_max = float(fwd[0].r_max)
    return float(
        bidirectional_image_loss_batch(
            fr[None], fv[None], br[None], bv[None], weights, r_max
        )[0]
    )


def bidirectional_image_loss_batch(
    fr, fv, br, bv, weights: LossWeights, r_max: float
) -> np.ndarray:
    """fr, fv, br, bv: (n, L, B). Returns (n,)."""
    l_steps = fr.shape[1]
    w = weights.w
    d_fwd = obs_distance_batch(
        br[:, 0:1, :], bv[:, 0:1, :], fr, fv, r_max
    )
    d_bwd = obs_distance_batch(
        fr[:, l_steps - 1 : l_steps, :], fv[:, l_steps - 1 : l_steps, :], br, bv, r_max
    )
    return (d_fwd @ w[:l_steps] + d_bwd @ w[l_steps - 1 : 2 * l_steps - 1]) / (
        2 * l_steps
    )


def bidirectional_image_terms(fwd, bwd, weights: LossWeights):
    """Weighted per-step contributions of both sums of the bidirectional
    image loss (each already carrying its 1/2L factor); the loss is the sum
    of both returned vectors."""
    l_steps = len(fwd)
    w = weights.w
    d_fwd = np.array([obs_distance(bwd[0], fwd[k]) for k in range(l_steps)])
    d_bwd = np.array([obs_distance(fwd[l_steps - 1], bwd[k]) for k in range(l_steps)])
    terms_fwd = w[:l_steps] * d_fwd / (2 * l_steps)
    terms_bwd = w[l_steps - 1 : 2 * l_steps - 1] * d_bwd / (2 * l_steps)
    return terms_fwd, terms_bwd


def unidirectional_image_loss(subgoal, fwd, weights: LossWeights) -> float:
    """Forward-only variant: every forward step compared to the subgoal."""
    fr = np.stack([p.ranges for p in fwd])
    fv = np.stack([p.validity for p in fwd])
    return float(
        unidirectional_image_loss_batch(
            np.asarray(subgoal.ranges), np.asarray(subgoal.validity),
            fr[None], fv[None], weights, float(subgoal.r_max),
        )[0]
    )


def unidirectional_image_loss_batch(
    sg_r, sg_v, fr, fv, weights: LossWeights, r_max: float
) -> np.ndarray:
    l_steps = fr.shape[1]
    d = obs_distance_batch(sg_r[None, None, :], sg_v[None, None, :], fr, fv, r_max)
    return (d @ weights.w[:l_steps]) / l_steps


def trajectory_likelihood_loss(ref_traj, mean_traj, covs) -> float:
    """Per-step-averaged negative log likelihood of the reference trajectory
    under per-step Gaussians centered on the mean trajectory.

    The heading residual is wrapped so poses across the branch cut compare
    by their true angular separation. Raises on singular covariances.
    """
    ref = poses_to_array(ref_traj)
    mean = poses_to_array(mean_traj)
    covs = np.asarray(covs, dtype=float)
    steps = ref.shape[0]
    try:
        chol = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariances must be positive definite") from exc
    resid = ref - mean
    resid[:, 2] = wrap_angle_array(resid[:, 2])
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
    z = np.linalg.solve(chol, resid[:, :, None])[:, :, 0]
    maha = np.einsum("ki,ki->k", z, z)
    terms = 0.5 * (3.0 * np.log(2.0 * np.pi) + logdet) + 0.5 * maha
    return float(terms.sum() / steps)


def likelihood_loss_closed_form(
    ref_traj: np.ndarray,
    poses: np.ndarray,
    sigma_diag: np.ndarray,
    gamma_diag: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Batched trajectory likelihood for diagonal command covariance.

    poses: (n, K, 3) candidate rollouts; ref_traj: (K, 3). The per-step pose
    covariance is F diag(sigma_diag) F^T + diag(gamma_diag) with F evaluated
    at each candidate's own pre-step heading, inverted in closed form.
    gamma must have equal x/y entries for the closed form to hold.
    """
    if gamma_diag[0] != gamma_diag[1]:
        raise ValueError("closed form requires gamma_x == gamma_y")
    n, steps = poses.shape[0], poses.shape[1]
    g, g_t = gamma_diag[0], gamma_diag[2]
    a = dt * dt * sigma_diag[0]
    b = dt * dt * sigma_diag[1]
    theta_prev = np.concatenate(
        [np.zeros((n, 1)), poses[:, :-1, 2]], axis=1
    )
    c = np.cos(theta_prev)
    s = np.sin(theta_prev)
    rx = ref_traj[None, :, 0] - poses[:, :, 0]
    ry = ref_traj[None, :, 1] - poses[:, :, 1]
    rt = wrap_angle_array(ref_traj[None, :, 2] - poses[:, :, 2])
    # 2x2 position block (a cc^T + g I) inverted analytically
    det2 = g * (g + a)
    p11 = a * s * s + g
    p22 = a * c * c + g
    p12 = -a * c * s
    maha = (p11 * rx * rx + 2.0 * p12 * rx * ry + p22 * ry * ry) / det2
    maha += rt * rt / (b + g_t)
    logdet = np.log(g * (g + a) * (b + g_t))
    terms = 0.5 * (3.0 * np.log(2.0 * np.pi) + logdet) + 0.5 * maha
    return terms.sum(axis=1) / steps


def smoothness_loss(cmds) -> float:
    """Sum of squared command increments over the sequence."""
    arr = np.asarray(cmds, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 2)
    return float((np.diff(arr, axis=0) ** 2).sum())


def smoothness_loss_batch(cmds: np.ndarray) -> np.ndarray:
    """cmds: (n, K, 2) -> (n,)."""
    d = np.diff(cmds, axis=1)
    return (d * d).sum(axis=(1, 2))


def imitation_loss(ref, cmds) -> float:
    """Mean squared error between command sequences (steps and components)."""
    ref = np.asarray(ref, dtype=float)
    cmds = np.asarray(cmds, dtype=float)
    return float(((ref - cmds) ** 2).mean())


def imitation_loss_batch(ref: np.ndarray, cmds: np.ndarray) -> np.ndarray:
    return ((ref[None] - cmds) ** 2).mean(axis=(1, 2))


def traversability_loss(probs, kappa_trav: float) -> float:
    """Mean squared shortfall of the kernelized traversable probability."""
    p = np.asarray(probs, dtype=float)
    return float(((1.0 - np.clip(kappa_trav * p, 0.0, 1.0)) ** 2).mean())


def composite(bimg: float, tl: float, smo: float, weights: LossWeights) -> float:
    return bimg + weights.kappa1 * tl + weights.kappa2 * smo
