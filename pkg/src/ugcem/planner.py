"""Uncertainty-guided cross-entropy-method planning with particle rollouts.

A planning call samples a population of action sequences from a diagonal
Gaussian, propagates P copies of the start state through ensemble members
(trajectory sampling), scores every sequence by its mean particle return
minus `beta` times a normalized particle-variance uncertainty estimate, and
refits the sampling distribution to the elite set. With `beta = 0` the
objective is the plain expected return.

Determinism contract: all randomness in a call flows through the single
generator passed in, and rollout noise / member assignments are drawn as
whole tensors in a fixed layout before any particle is stepped, so results
cannot depend on the order in which candidates are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import envs
from .ensemble import Ensemble

# Sentinel score for candidates whose rollout produced non-finite model output;
# finite so that downstream arithmetic stays well-defined.
FLAGGED_SCORE = -1e18


@dataclass(frozen=True)
class CemConfig:
    env_id: str
    horizon: int = 10
    iterations: int = 5
    elite_ratio: float = 0.3
    population: int = 200
    particles: int = 12
    alpha: float = 0.1
    beta: float = 0.0
    propagation: str = "ts_inf"
    action_low: np.ndarray | None = None
    action_high: np.ndarray | None = None
    dtype: str = "float32"
    disable_penalty: bool = False

    def __post_init__(self):
        if self.horizon < 1 or self.particles < 1 or self.population < 1:
            raise ValueError("horizon, particles and population must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.propagation not in ("ts_inf", "ts_1"):
            raise ValueError(f"unknown propagation mode: {self.propagation!r}")
        if self.elite_count < 1:
            raise ValueError("elite set is empty")
        low, high = self.action_low, self.action_high
        if low is None or high is None:
            env_low, env_high = envs.action_bounds(self.env_id)
            low = env_low if low is None else np.asarray(low, dtype=np.float64)
            high = env_high if high is None else np.asarray(high, dtype=np.float64)
        object.__setattr__(self, "action_low", np.asarray(low, dtype=np.float64))
        object.__setattr__(self, "action_high", np.asarray(high, dtype=np.float64))

    @property
    def elite_count(self) -> int:
        return max(1, int(round(self.elite_ratio * self.population)))

    @property
    def act_dim(self) -> int:
        return envs.act_dim(self.env_id)

    def initial_variance(self) -> np.ndarray:
        return ((self.action_high - self.action_low) / 4.0) ** 2


@dataclass
class PlanningDistribution:
    """Per-timestep action mean and diagonal variance, shapes (H, act_dim)."""

    mean: np.ndarray
    var: np.ndarray

    def copy(self) -> "PlanningDistribution":
        return PlanningDistribution(mean=self.mean.copy(), var=self.var.copy())


@dataclass
class VarianceNormalizer:
    """Running mean particle variance per (state dim, rollout step).

    Fresh normalizers start at 1 (identity normalization) until the first
    update installs the observed batch mean; later updates blend by an
    exponential moving average. Entries never fall below `floor`.
    """

    mean_var: np.ndarray
    count: int = 0
    decay: float = 0.99
    floor: float = 1e-8

    @classmethod
    def identity(cls, state_dim: int, horizon: int, **kwargs) -> "VarianceNormalizer":
        return cls(mean_var=np.ones((state_dim, horizon)), **kwargs)


def update_normalizer(
    normalizer: VarianceNormalizer, sigma2_batch: list[np.ndarray]
) -> VarianceNormalizer:
    """Fold a batch of variance tensors (each (..., S, H)) into the running mean.

    The very first update sets the table directly to the batch mean; later
    updates apply `decay * old + (1 - decay) * batch_mean`. In-place.
    """
    stacked = np.concatenate(
        [np.asarray(s, dtype=np.float64).reshape(-1, *normalizer.mean_var.shape) for s in sigma2_batch]
    )
    batch_mean = stacked.mean(axis=0)
    if not np.isfinite(batch_mean).all():
        raise FloatingPointError("non-finite variance batch")
    if normalizer.count == 0:
        new = batch_mean
    else:
        new = normalizer.decay * normalizer.mean_var + (1.0 - normalizer.decay) * batch_mean
    normalizer.mean_var = np.maximum(new, normalizer.floor)
    normalizer.count += 1
    return normalizer


def sample_population(
    dist: PlanningDistribution,
    n: int,
    rng: np.random.Generator,
    low: np.ndarray,
    high: np.ndarray,
) -> np.ndarray:
    """Draw n action sequences (n, H, act_dim) and clamp them to the bounds."""
    draw = dist.mean + np.sqrt(dist.var) * rng.standard_normal((n, *dist.mean.shape))
    return np.clip(draw, low, high)


def assign_members(
    n: int,
    p: int,
    b: int,
    mode: str,
    rng: np.random.Generator,
    horizon: int | None = None,
) -> np.ndarray:
    """Member indices per particle.

    ts_inf: (n, p) indices fixed for the whole rollout, `p mod b` with the
    particle order shuffled independently per candidate (so usage stays
    exactly balanced when b divides p). ts_1: fresh uniform indices per
    (candidate, particle, step), shape (n, p, horizon).
    """
    if p < 1 or b < 1:
        raise ValueError("particles and ensemble size must be >= 1")
    if mode == "ts_inf":
        perms = rng.permuted(np.tile(np.arange(p), (n, 1)), axis=1)
        return perms % b
    if mode == "ts_1":
        if horizon is None:
            raise ValueError("ts_1 assignment needs a horizon")
        return rng.integers(0, b, size=(n, p, horizon))
    raise ValueError(f"unknown propagation mode: {mode!r}")


@dataclass
class RolloutTensor:
    """Trajectory-sampled rollouts for one population.

    states: (N, P, H+1, S); rewards: (N, P, H); done_mask: (N, P, H+1).
    member_assignment is (N, P) under ts_inf and (N, P, H) under ts_1.
    flagged marks candidates whose rollout produced non-finite model output.
    """

    states: np.ndarray
    rewards: np.ndarray
    done_mask: np.ndarray
    member_assignment: np.ndarray
    flagged: np.ndarray


def rollout(
    ensemble: Ensemble,
    start_obs: np.ndarray,
    actions: np.ndarray,
    config: CemConfig,
    rng: np.random.Generator,
    ignore_done: bool = False,
) -> RolloutTensor:
    """Propagate P particles per candidate through sampled ensemble members.

    Per (candidate, particle, step) the next observation is a Gaussian sample
    from the assigned member; rewards are the analytic observation-space
    reward of each predicted next state. Termination is absorbing: once a
    particle's state crosses the termination bounds (cartpole) its state is
    frozen and subsequent rewards are zero. `ignore_done` disables that freeze
    (states keep propagating and rewards keep accumulating) for diagnostics
    that probe the model outside the controllable region; non-finite model
    outputs still freeze and flag their candidate. Noise and member
    assignments for the whole tensor are drawn up front from `rng` (noise
    first), so the result is independent of evaluation order.
    """
    actions = np.asarray(actions)
    if actions.ndim != 3:
        raise ValueError("actions must be (N, H, act_dim)")
    n, h, a_dim = actions.shape
    p = config.particles
    s_dim = ensemble.obs_dim
    b = ensemble.size
    dtype = np.dtype(config.dtype)
    ce = ensemble.cast(dtype)

    noise = rng.standard_normal((n, p, h, s_dim))
    members = assign_members(n, p, b, config.propagation, rng, horizon=h)
    if config.propagation == "ts_inf":
        member_masks = [(members.reshape(-1) == m) for m in range(b)]

    states = np.empty((n, p, h + 1, s_dim), dtype=dtype)
    rewards = np.zeros((n, p, h), dtype=dtype)
    done_mask = np.empty((n, p, h + 1), dtype=bool)
    flagged = np.zeros(n, dtype=bool)

    cur = np.empty((n * p, s_dim), dtype=dtype)
    cur[:] = np.asarray(start_obs, dtype=dtype)
    states[:, :, 0, :] = cur.reshape(n, p, s_dim)
    done = np.empty(n * p, dtype=bool)
    done[:] = False if ignore_done else envs.terminal_from_obs(
        config.env_id, np.asarray(start_obs)
    )
    done_mask[:, :, 0] = done.reshape(n, p)

    acts_cast = actions.astype(dtype)
    for t in range(h):
        a_t = np.repeat(acts_cast[:, t, :], p, axis=0)
        nxt = cur.copy()
        r_t = np.zeros(n * p, dtype=dtype)
        active = ~done
        if active.any():
            x = np.concatenate([cur, a_t], axis=1)
            x -= ce.norm_mean
            x /= ce.norm_std
            mu = np.empty((n * p, s_dim), dtype=dtype)
            lv = np.empty((n * p, s_dim), dtype=dtype)
            if config.propagation == "ts_inf":
                step_masks = member_masks
            else:
                mem_t = members[:, :, t].reshape(-1)
                step_masks = [(mem_t == m) for m in range(b)]
            # model blow-ups in extrapolation are expected and handled by
            # flagging, so float overflow here is not an error condition
            with np.errstate(over="ignore", invalid="ignore"):
                for m in range(b):
                    idx = np.flatnonzero(step_masks[m] & active)
                    if idx.size:
                        mu[idx], lv[idx] = ce.forward_member(m, x[idx])
                # sqrt(exp(lv)) rather than exp(lv/2): bitwise-identical to
                # the predict_dist -> sample_next composition
                stepped = cur + mu + np.sqrt(np.exp(lv)) * noise.reshape(n * p, h, s_dim)[:, t, :].astype(dtype)
            bad = active & ~np.isfinite(stepped).all(axis=1)
            if bad.any():
                flagged |= bad.reshape(n, p).any(axis=1)
                done |= bad
                active &= ~bad
            nxt[active] = stepped[active]
            r_t[active] = envs.reward_from_obs(config.env_id, nxt[active], a_t[active])
            if not ignore_done:
                done |= envs.terminal_from_obs(config.env_id, nxt)
        states[:, :, t + 1, :] = nxt.reshape(n, p, s_dim)
        rewards[:, :, t] = r_t.reshape(n, p)
        done_mask[:, :, t + 1] = done.reshape(n, p)
        cur = nxt
    return RolloutTensor(
        states=states,
        rewards=rewards,
        done_mask=done_mask,
        member_assignment=members,
        flagged=flagged,
    )


def particle_variance(states: np.ndarray) -> np.ndarray:
    """Population variance of predicted states over particles.

    Accepts (P, H+1, S) or any leading batch shape (..., P, H+1, S); the
    start state (t = 0) is excluded. Returns (..., S, H).
    """
    states = np.asarray(states)
    var = states[..., 1:, :].var(axis=-3)
    return np.swapaxes(var, -1, -2)


def uncertainty(sigma2: np.ndarray, normalizer: VarianceNormalizer):
    """Normalized mean particle variance, averaged over dims and horizon.

    sigma2 may be a single (S, H) table or a batch (..., S, H); returns a
    float or an array of the leading shape accordingly.
    """
    sigma2 = np.asarray(sigma2)
    omega = (sigma2 / normalizer.mean_var).mean(axis=(-2, -1))
    if omega.ndim == 0:
        return float(omega)
    return omega


def epistemic_variance(states_n: np.ndarray, member_assignment_n: np.ndarray) -> np.ndarray:
    """Variance across per-member mean trajectories, shape (S, H).

    Averaging the particles that share a sampled model removes their
    within-model sampling noise, leaving the disagreement between models.
    Requires a fixed member per particle (ts_inf).
    """
    states_n = np.asarray(states_n)
    member_assignment_n = np.asarray(member_assignment_n)
    if member_assignment_n.ndim != 1:
        raise ValueError("epistemic decomposition requires ts_inf member assignment")
    groups = np.unique(member_assignment_n)
    means = np.stack(
        [states_n[member_assignment_n == g, 1:, :].mean(axis=0) for g in groups]
    )
    return np.swapaxes(means.var(axis=0), -1, -2)


def uncertainty_decomposed(
    states_n: np.ndarray,
    member_assignment_n: np.ndarray,
    normalizer: VarianceNormalizer,
) -> float:
    """Epistemic-only uncertainty, normalized and aggregated like `uncertainty`."""
    return uncertainty(epistemic_variance(states_n, member_assignment_n), normalizer)


def penalized_return(rewards_n: np.ndarray, omega: float, beta: float) -> float:
    """Mean particle return minus the weighted uncertainty penalty."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    rewards_n = np.asarray(rewards_n, dtype=np.float64)
    return float(rewards_n.sum(axis=-1).mean(axis=-1) - beta * omega)


def cem_iteration(
    dist: PlanningDistribution,
    actions: np.ndarray,
    scores: np.ndarray,
    config: CemConfig,
) -> PlanningDistribution:
    """Refit the planning distribution to the elite set with momentum alpha.

    Elites are the top `round(elite_ratio * N)` candidates; ties break toward
    the lower candidate index. If every candidate was flagged the previous
    distribution is kept unchanged.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] != actions.shape[0]:
        raise ValueError("scores/actions length mismatch")
    if np.all(scores == FLAGGED_SCORE):
        return dist.copy()
    order = np.argsort(-scores, kind="stable")
    elite = actions[order[: config.elite_count]]
    elite_mean = elite.mean(axis=0)
    elite_var = elite.var(axis=0)
    return PlanningDistribution(
        mean=config.alpha * dist.mean + (1.0 - config.alpha) * elite_mean,
        var=config.alpha * dist.var + (1.0 - config.alpha) * elite_var,
    )


@dataclass
class PlanIteration:
    """Post-refit distribution and per-candidate diagnostics of one iteration."""

    dist: PlanningDistribution
    omega: np.ndarray
    mean_return: np.ndarray
    penalized: np.ndarray
    states: np.ndarray
    flagged: np.ndarray


@dataclass
class PlanTrace:
    init_dist: PlanningDistribution
    iterations: list[PlanIteration] = field(default_factory=list)

    @property
    def final_dist(self) -> PlanningDistribution:
        return self.iterations[-1].dist if self.iterations else self.init_dist


def _initial_dist(config: CemConfig, warm_start: PlanningDistribution | None) -> PlanningDistribution:
    h, a = config.horizon, config.act_dim
    init_var = np.tile(config.initial_variance(), (h, 1))
    if warm_start is None:
        return PlanningDistribution(mean=np.zeros((h, a)), var=init_var)
    if warm_start.mean.shape != (h, a):
        raise ValueError("warm start shape mismatch")
    mean = np.vstack([warm_start.mean[1:], np.zeros((1, a))])
    var = np.vstack([warm_start.var[1:], init_var[-1:]])
    return PlanningDistribution(mean=mean, var=var)


def plan(
    ensemble: Ensemble,
    start_obs: np.ndarray,
    config: CemConfig,
    normalizer: VarianceNormalizer,
    rng: np.random.Generator,
    warm_start: PlanningDistribution | None = None,
) -> tuple[np.ndarray, PlanTrace]:
    """Run the full CEM loop from `start_obs` and return the first action.

    The normalizer is read-only while candidates are scored and updated once,
    from the variance tensors of every candidate in every iteration, after
    the loop completes. The distribution is warm-startable with the previous
    call's solution shifted by one step.
    """
    if normalizer.mean_var.shape != (ensemble.obs_dim, config.horizon):
        raise ValueError("normalizer shape does not match (state_dim, horizon)")
    dist = _initial_dist(config, warm_start)
    trace = PlanTrace(init_dist=dist.copy())
    sigma2_all: list[np.ndarray] = []
    for _ in range(config.iterations):
        actions = sample_population(
            dist, config.population, rng, config.action_low, config.action_high
        )
        roll = rollout(ensemble, start_obs, actions, config, rng)
        sigma2 = particle_variance(roll.states.astype(np.float64))
        omega = uncertainty(sigma2, normalizer)
        mean_return = roll.rewards.astype(np.float64).sum(axis=-1).mean(axis=-1)
        if config.disable_penalty:
            scores = mean_return.copy()
        else:
            scores = mean_return - config.beta * omega
        scores[roll.flagged] = FLAGGED_SCORE
        dist = cem_iteration(dist, actions, scores, config)
        trace.iterations.append(
            PlanIteration(
                dist=dist.copy(),
                omega=omega,
                mean_return=mean_return,
                penalized=scores,
                states=roll.states,
                flagged=roll.flagged,
            )
        )
        sigma2_all.append(sigma2)
    update_normalizer(normalizer, sigma2_all)
    first = np.clip(trace.final_dist.mean[0], config.action_low, config.action_high)
    return first, trace


def write_trace_csv(trace: PlanTrace, path) -> None:
    """Per-candidate scores: iteration,candidate,omega,mean_return,penalized_return."""
    with open(path, "w") as fh:
        fh.write("iteration,candidate,omega,mean_return,penalized_return\n")
        for i, it in enumerate(trace.iterations, start=1):
            for c in range(it.omega.shape[0]):
                fh.write(
                    f"{i},{c},{it.omega[c]:.17g},{it.mean_return[c]:.17g},"
                    f"{it.penalized[c]:.17g}\n"
                )


def write_trace_states_csv(trace: PlanTrace, path) -> None:
    """Visited rollout states: iteration,candidate,particle,t,s_0..s_{S-1}."""
    if not trace.iterations:
        raise ValueError("empty trace")
    s_dim = trace.iterations[0].states.shape[-1]
    cols = ",".join(f"s_{k}" for k in range(s_dim))
    with open(path, "w") as fh:
        fh.write(f"iteration,candidate,particle,t,{cols}\n")
        for i, it in enumerate(trace.iterations, start=1):
            n, p, steps, _ = it.states.shape
            for c in range(n):
                for q in range(p):
                    for t in range(steps):
                        vals = ",".join(format(float(v), ".9g") for v in it.states[c, q, t])
                        fh.write(f"{i},{c},{q},{t},{vals}\n")
