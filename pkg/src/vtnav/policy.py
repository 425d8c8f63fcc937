"""Control policy: per-subgoal cross-entropy optimization of the composite
objective over velocity sequences, producing per-step command Gaussians and
sigma-point sample trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import (
    DEFAULT_GAMMA,
    V_MAX,
    W_MAX,
    CommandGaussian,
    rollout_array,
)
from .losses import (
    LossWeights,
    bidirectional_image_loss_batch,
    default_weights,
    imitation_loss_batch,
    likelihood_loss_closed_form,
    smoothness_loss_batch,
    unidirectional_image_loss_batch,
)
from .prediction import predict_backward_batch, predict_forward_batch

CMD_LO = np.array([-V_MAX, -W_MAX])
CMD_HI = np.array([V_MAX, W_MAX])


@dataclass(frozen=True)
class CemParams:
    """Cross-entropy method settings. init_sigma holds per-axis standard
    deviations of the initial sampling distribution; sigma_floor sets
    per-axis lower bounds on the sampling spread and on the reported
    per-step covariance, so the emitted distribution keeps some diversity
    instead of collapsing onto the optimizer's fixed point. The angular
    floor is small enough that the spread trajectories stay inside the
    heading gate of the subgoal-advance test once the mean has converged.
    noise_knots controls the temporal smoothness of exploration:
    perturbations are drawn at that many knots per half-horizon and
    linearly interpolated, so candidate sequences stay smooth enough that
    the smoothness penalty ranks them by progress rather than by sampling
    jitter. The two horizon halves are perturbed independently because
    they play different roles (approach versus continuation past the
    subgoal); correlated noise across the midpoint couples slowing down
    with backing up, which the image term always rejects.
    noise_knots <= 1 falls back to independent per-step noise."""

    population: int = 50
    elites: int = 5
    iterations: int = 5
    init_sigma: tuple[float, float] = (0.2, 0.5)
    sigma_floor: tuple[float, float] = (0.02, 0.03)
    noise_knots: int = 3
    rng_seed: int = 0


@dataclass(frozen=True)
class TrajectoryDistribution:
    steps: list[CommandGaussian]

    def means(self) -> np.ndarray:
        return np.array([g.mu for g in self.steps])

    def covariances(self) -> np.ndarray:
        return np.array([g.sigma for g in self.steps])


@dataclass
class Candidate:
    """One (subgoal, sample) trajectory with its predictions and scores."""

    subgoal_index: int
    sample_index: int
    cmds: np.ndarray
    fwd_ranges: np.ndarray
    fwd_validity: np.ndarray
    bwd_ranges: np.ndarray | None
    bwd_validity: np.ndarray | None
    terminal_pose: np.ndarray
    total_rotation: float
    score_reac: float = field(default=np.nan)
    score_trav: float = field(default=np.nan)


@dataclass
class CemResult:
    mean: np.ndarray
    step_covs: np.ndarray
    best_history: np.ndarray
    best_sample: np.ndarray
    best_value: float


def _interp_noise(
    rng: np.random.Generator, population: int, steps: int, knots: int
) -> np.ndarray:
    """Unit-variance noise, linearly interpolated between random knots."""
    if knots <= 1 or steps <= 2:
        return rng.standard_normal((population, steps, 2))
    knot_vals = rng.standard_normal((population, knots, 2))
    x = np.linspace(0.0, knots - 1.0, steps)
    lo = np.floor(x).astype(int)
    hi = np.minimum(lo + 1, knots - 1)
    frac = (x - lo)[None, :, None]
    return knot_vals[:, lo] * (1.0 - frac) + knot_vals[:, hi] * frac


def _sample_noise(
    rng: np.random.Generator, population: int, horizon: int, knots: int
) -> np.ndarray:
    """Exploration noise: independent smooth segments per horizon half."""
    front = horizon // 2
    if knots <= 1:
        return rng.standard_normal((population, horizon, 2))
    return np.concatenate(
        [
            _interp_noise(rng, population, front, knots),
            _interp_noise(rng, population, horizon - front, knots),
        ],
        axis=1,
    )


def _elite_weights(n: int) -> np.ndarray:
    """Log-rank weights (best elite weighted highest), normalized to 1."""
    w = np.log(n + 0.5) - np.log(np.arange(1, n + 1))
    return w / w.sum()


def cem_minimize(
    objective,
    init_mean: np.ndarray,
    params: CemParams,
    rng: np.random.Generator,
) -> CemResult:
    """Minimize objective(samples)->(n,) over command sequences.

    The current mean is always included in the population, samples are
    clamped to the velocity limits before evaluation, and each iteration
    re-centers on the best sequence found so far while the per-step spread
    is re-fit from the elite set with log-rank weights (floored at
    sigma_floor). Centering on the incumbent rather than an elite average
    matters on objectives that cannot separate floor-level sampling noise
    (a featureless scene scores every sequence alike): the incumbent is
    never displaced by unranked noise, so the mean stays put instead of
    random-walking.
    """
    horizon = init_mean.shape[0]
    init_sigma = np.asarray(params.init_sigma, dtype=float)
    floor = np.asarray(params.sigma_floor, dtype=float)
    mean = np.clip(init_mean.astype(float), CMD_LO, CMD_HI)
    std = np.tile(init_sigma, (horizon, 1))
    weights = _elite_weights(params.elites)
    best_value = np.inf
    best_sample = mean.copy()
    history = np.empty(params.iterations)
    elite = None
    for it in range(params.iterations):
        noise = _sample_noise(rng, params.population, horizon, params.noise_knots)
        samples = mean[None] + std[None] * noise
        samples[0] = mean
        np.clip(samples, CMD_LO, CMD_HI, out=samples)
        values = np.asarray(objective(samples))
        order = np.argsort(values, kind="stable")
        if values[order[0]] < best_value:
            best_value = float(values[order[0]])
            best_sample = samples[order[0]].copy()
        history[it] = best_value
        elite = samples[order[: params.elites]]
        mean = best_sample.copy()
        dev = elite - mean[None]
        std = np.maximum(np.sqrt(np.einsum("n,nkc->kc", weights, dev * dev)), floor)
    centered = elite - mean[None]
    covs = np.einsum("n,nki,nkj->kij", weights, centered, centered)
    covs += 1e-6 * np.eye(2)
    covs[:, 0, 0] = np.maximum(covs[:, 0, 0], floor[0] ** 2)
    covs[:, 1, 1] = np.maximum(covs[:, 1, 1], floor[1] ** 2)
    return CemResult(mean, covs, history, best_sample, best_value)


def make_objective(
    current_obs,
    subgoal_obs,
    ref_segment: np.ndarray,
    dt: float,
    l_steps: int,
    weights: LossWeights,
    bidirectional: bool = True,
    use_likelihood: bool = True,
    sigma_diag: np.ndarray | None = None,
    gamma_diag: np.ndarray | None = None,
    kappa_imi: float = 1.0,
):
    """Composite objective over a batch of command sequences.

    bidirectional=False scores forward predictions against the subgoal
    observation directly over an L-step horizon; use_likelihood=False
    replaces the trajectory likelihood with the command-space imitation
    loss (the deterministic-control variant)."""
    ref_segment = np.asarray(ref_segment, dtype=float)
    ref_traj = rollout_array(ref_segment[None], dt)[0]
    if sigma_diag is None:
        sigma_diag = np.array([0.04, 0.25])
    if gamma_diag is None:
        gamma_diag = np.ascontiguousarray(np.diag(DEFAULT_GAMMA))
    sg_r = np.asarray(subgoal_obs.ranges)
    sg_v = np.asarray(subgoal_obs.validity)
    r_max = float(subgoal_obs.r_max)

    def objective(samples: np.ndarray) -> np.ndarray:
        fwd_r, fwd_v = predict_forward_batch(current_obs, samples[:, :l_steps], dt)
        if bidirectional:
            bwd_r, bwd_v = predict_backward_batch(
                subgoal_obs, samples[:, l_steps:], dt
            )
            img = bidirectional_image_loss_batch(
                fwd_r, fwd_v, bwd_r, bwd_v, weights, r_max
            )
        else:
            img = unidirectional_image_loss_batch(
                sg_r, sg_v, fwd_r, fwd_v, weights, r_max
            )
        if use_likelihood:
            poses = rollout_array(samples, dt)
            fit = weights.kappa1 * likelihood_loss_closed_form(
                ref_traj, poses, sigma_diag, gamma_diag, dt
            )
        else:
            fit = kappa_imi * imitation_loss_batch(ref_segment, samples)
        smo = weights.kappa2 * smoothness_loss_batch(samples)
        return img + fit + smo

    return objective


def optimize_distribution(
    current_obs,
    subgoal_obs,
    ref_segment: np.ndarray,
    params: CemParams,
    dt: float,
    l_steps: int,
    rng: np.random.Generator | None = None,
    weights: LossWeights | None = None,
    bidirectional: bool = True,
    use_likelihood: bool = True,
    kappa_imi: float = 1.0,
) -> TrajectoryDistribution:
    """Fit per-step command Gaussians toward the subgoal observation."""
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    if weights is None:
        weights = default_weights(l_steps)
    objective = make_objective(
        current_obs,
        subgoal_obs,
        ref_segment,
        dt,
        l_steps,
        weights,
        bidirectional=bidirectional,
        use_likelihood=use_likelihood,
        kappa_imi=kappa_imi,
    )
    result = cem_minimize(objective, np.asarray(ref_segment, dtype=float), params, rng)
    mean = np.clip(result.mean, CMD_LO, CMD_HI)
    steps = [CommandGaussian(mean[k], result.step_covs[k]) for k in range(mean.shape[0])]
    return TrajectoryDistribution(steps)


def sigma_point_trajectories(dist: TrajectoryDistribution) -> np.ndarray:
    """Mean plus the +-2 sigma points along the angular axis: (3, K, 2)."""
    mu = dist.means()
    covs = dist.covariances()
    vals, vecs = np.linalg.eigh(covs)
    if vals.min() < -1e-9:
        raise ValueError("command covariance must be positive semi-definite")
    roots = vecs @ (np.sqrt(np.maximum(vals, 0.0))[:, :, None] * vecs.transpose(0, 2, 1))
    ang_col = roots[:, :, 1]
    out = np.stack([mu, mu + 2.0 * ang_col, mu - 2.0 * ang_col])
    return np.clip(out, CMD_LO, CMD_HI)


def generate_candidates(
    current_obs,
    subgoal_observations,
    ref_segments,
    params: CemParams,
    dt: float,
    l_steps: int,
    rng: np.random.Generator | None = None,
    m_samples: int = 3,
    bidirectional: bool = True,
    use_likelihood: bool = True,
    kappa_imi: float = 1.0,
    weights: LossWeights | None = None,
) -> list[Candidate]:
    """Optimize one distribution per subgoal and emit M candidates each."""
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    if weights is None:
        weights = default_weights(l_steps)
    child_rngs = rng.spawn(len(subgoal_observations))
    candidates = []
    for i, (sg_obs, ref) in enumerate(zip(subgoal_observations, ref_segments)):
        dist = optimize_distribution(
            current_obs,
            sg_obs,
            ref,
            params,
            dt,
            l_steps,
            rng=child_rngs[i],
            weights=weights,
            bidirectional=bidirectional,
            use_likelihood=use_likelihood,
            kappa_imi=kappa_imi,
        )
        cmd_sets = sigma_point_trajectories(dist)[:m_samples]
        fwd_r, fwd_v = predict_forward_batch(current_obs, cmd_sets[:, :l_steps], dt)
        if bidirectional:
            bwd_r, bwd_v = predict_backward_batch(sg_obs, cmd_sets[:, l_steps:], dt)
        poses = rollout_array(cmd_sets, dt)
        for j in range(cmd_sets.shape[0]):
            candidates.append(
                Candidate(
                    subgoal_index=i,
                    sample_index=j,
                    cmds=cmd_sets[j],
                    fwd_ranges=fwd_r[j],
                    fwd_validity=fwd_v[j],
                    bwd_ranges=bwd_r[j] if bidirectional else None,
                    bwd_validity=bwd_v[j] if bidirectional else None,
                    terminal_pose=poses[j, -1],
                    total_rotation=float(dt * cmd_sets[j, :, 1].sum()),
                )
            )
    return candidates
