"""Offline evaluation: MPC episodes, beta sweeps, heatmaps, planning traces.

The forbidden-region cost is an observer-only metric: it counts time steps
whose post-action observation lies in the region and is never shown to the
planner, whose actions depend only on the ensemble, the planner config and
the seed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import envs
from .ensemble import Ensemble
from .planner import (
    CemConfig,
    VarianceNormalizer,
    particle_variance,
    plan,
    rollout,
    uncertainty,
    write_trace_csv,
    write_trace_states_csv,
)

DEFAULT_MAX_STEPS = 200
DEFAULT_EPISODES_PER_CELL = 10
DEFAULT_BETAS = (0.0, 0.5, 1.0, 2.0, 5.0)


@dataclass
class EpisodeRecord:
    env_id: str
    beta: float
    seed: int
    episode: int
    episode_return: float
    cost: int
    trajectory: list[tuple[np.ndarray, np.ndarray, float]]


def run_episode(
    env_id: str,
    ensemble: Ensemble,
    config: CemConfig,
    region: envs.RegionSpec,
    seed,
    max_steps: int = DEFAULT_MAX_STEPS,
    normalizer: VarianceNormalizer | None = None,
    episode: int = 0,
) -> EpisodeRecord:
    """Run one MPC episode: plan, apply the first action, observe, repeat.

    One generator seeded by `seed` drives the reset and every planning call,
    so records are fully reproducible. The planner is warm-started with the
    previous step's solution. Cost counts post-action observations inside the
    forbidden region; the region never reaches the planner.
    """
    rng = np.random.default_rng(seed)
    if normalizer is None:
        normalizer = VarianceNormalizer.identity(ensemble.obs_dim, config.horizon)
    state = envs.reset(env_id, rng)
    obs = envs.observe(env_id, state)
    warm = None
    total = 0.0
    cost = 0
    trajectory = []
    for _ in range(max_steps):
        action, trace = plan(ensemble, obs, config, normalizer, rng, warm_start=warm)
        warm = trace.final_dist
        state, reward, done = envs.step(env_id, state, float(action[0]))
        next_obs = envs.observe(env_id, state)
        trajectory.append((obs, action.copy(), reward))
        total += reward
        cost += int(envs.in_forbidden_region(next_obs, region))
        obs = next_obs
        if done:
            break
    seed_label = seed if isinstance(seed, int) else int(seed[0])
    return EpisodeRecord(
        env_id=env_id,
        beta=config.beta,
        seed=seed_label,
        episode=episode,
        episode_return=total,
        cost=cost,
        trajectory=trajectory,
    )


@dataclass
class SweepResult:
    """Raw per-episode records of a (beta x seed) grid plus aggregate views."""

    env_id: str
    betas: tuple[float, ...]
    seeds: tuple[int, ...]
    records: list[EpisodeRecord] = field(default_factory=list)

    def cell_records(self, beta: float, seed: int) -> list[EpisodeRecord]:
        return [r for r in self.records if r.beta == beta and r.seed == seed]

    def cell_stats(self, beta: float, seed: int) -> tuple[float, float, float, float]:
        """(mean_return, std_return, mean_cost, std_cost) over a cell's episodes."""
        rs = self.cell_records(beta, seed)
        rets = np.array([r.episode_return for r in rs])
        costs = np.array([r.cost for r in rs], dtype=float)
        return float(rets.mean()), float(rets.std()), float(costs.mean()), float(costs.std())

    def beta_stats(self, beta: float) -> tuple[float, float, float, float]:
        """(mean_return, std_return, mean_cost, std_cost) over all seeds/episodes."""
        rs = [r for r in self.records if r.beta == beta]
        rets = np.array([r.episode_return for r in rs])
        costs = np.array([r.cost for r in rs], dtype=float)
        return float(rets.mean()), float(rets.std()), float(costs.mean()), float(costs.std())


def _run_cell(args) -> tuple[int, int, list[EpisodeRecord]]:
    (env_id, ensemble, config, region, beta_idx, beta, seed_idx, seed, episodes, max_steps) = args
    cell_config = replace(config, beta=beta)
    normalizer = VarianceNormalizer.identity(ensemble.obs_dim, config.horizon)
    records = []
    for e in range(episodes):
        records.append(
            run_episode(
                env_id,
                ensemble,
                cell_config,
                region,
                seed=[seed, e],
                max_steps=max_steps,
                normalizer=normalizer,
                episode=e,
            )
        )
    return beta_idx, seed_idx, records


def run_sweep(
    env_id: str,
    ensemble: Ensemble,
    betas,
    seeds,
    episodes_per_cell: int = DEFAULT_EPISODES_PER_CELL,
    config: CemConfig | None = None,
    region: envs.RegionSpec | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    workers: int = 1,
) -> SweepResult:
    """Evaluate the full beta x seed cross product.

    Each cell owns its rng stream (episode e of seed s is seeded by [s, e]),
    its planner warm starts and its variance normalizer (persisted across the
    cell's episodes), so results are identical for any worker count.
    """
    betas = tuple(float(b) for b in betas)
    seeds = tuple(int(s) for s in seeds)
    if not betas or not seeds:
        raise ValueError("betas and seeds must be non-empty")
    if config is None:
        config = CemConfig(env_id=env_id)
    if region is None:
        region = envs.default_region(env_id)
    tasks = [
        (env_id, ensemble, config, region, bi, beta, si, seed, episodes_per_cell, max_steps)
        for bi, beta in enumerate(betas)
        for si, seed in enumerate(seeds)
    ]
    cells: dict[tuple[int, int], list[EpisodeRecord]] = {}
    if workers <= 1:
        for task in tasks:
            bi, si, records = _run_cell(task)
            cells[(bi, si)] = records
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for bi, si, records in pool.map(_run_cell, tasks):
                cells[(bi, si)] = records
    result = SweepResult(env_id=env_id, betas=betas, seeds=seeds)
    for bi in range(len(betas)):
        for si in range(len(seeds)):
            result.records.extend(cells[(bi, si)])
    return result


@dataclass(frozen=True)
class GridSpec:
    """Two observation dimensions swept over inclusive linspace ranges."""

    dim1: int
    dim2: int
    lo1: float
    hi1: float
    lo2: float
    hi2: float
    res1: int = 21
    res2: int = 21

    def axis1(self) -> np.ndarray:
        return np.linspace(self.lo1, self.hi1, self.res1)

    def axis2(self) -> np.ndarray:
        return np.linspace(self.lo2, self.hi2, self.res2)


def default_grid(env_id: str) -> GridSpec:
    """Cart position x pole angle for cartpole (within termination bounds so
    rollouts never start absorbed); angle-embedding x velocity for pendulum."""
    if env_id == envs.CARTPOLE:
        return GridSpec(dim1=0, dim2=2, lo1=-0.3, hi1=0.3, lo2=-0.2, hi2=0.2)
    return GridSpec(dim1=0, dim2=1, lo1=-1.0, hi1=1.0, lo2=-1.0, hi2=1.0)


def uncertainty_heatmap(
    ensemble: Ensemble,
    grid_spec: GridSpec,
    fixed_other_dims: np.ndarray,
    config: CemConfig,
    rng: np.random.Generator,
    n_actions: int = 200,
    horizon: int = 1,
) -> np.ndarray:
    """Mean uncertainty per grid cell, shape (res1, res2).

    Each cell builds an observation from `fixed_other_dims` with the two grid
    dimensions overwritten, samples `n_actions` standard-normal action
    sequences clamped to the bounds, rolls them out for `horizon` steps with
    fixed-member propagation, and averages the per-action uncertainty under
    an identity normalizer.
    """
    base = np.asarray(fixed_other_dims, dtype=np.float64)
    if base.shape != (ensemble.obs_dim,):
        raise ValueError("fixed_other_dims must be a full observation vector")
    cell_config = replace(config, horizon=horizon, population=n_actions, propagation="ts_inf")
    identity = VarianceNormalizer.identity(ensemble.obs_dim, horizon)
    out = np.empty((grid_spec.res1, grid_spec.res2))
    for i, v1 in enumerate(grid_spec.axis1()):
        for j, v2 in enumerate(grid_spec.axis2()):
            obs = base.copy()
            obs[grid_spec.dim1] = v1
            obs[grid_spec.dim2] = v2
            actions = np.clip(
                rng.standard_normal((n_actions, horizon, envs.act_dim(ensemble.env_id))),
                cell_config.action_low,
                cell_config.action_high,
            )
            # diagnostic rollouts probe the model itself, so termination does
            # not freeze states here (a frozen cell would read zero variance)
            roll = rollout(ensemble, obs, actions, cell_config, rng, ignore_done=True)
            sigma2 = particle_variance(roll.states.astype(np.float64))
            out[i, j] = float(np.mean(uncertainty(sigma2, identity)))
    return out


def plan_trace_experiment(
    ensemble: Ensemble,
    start_obs: np.ndarray,
    config: CemConfig,
    rng: np.random.Generator,
    trace_path,
    states_path,
    warmup_calls: int = 1,
):
    """One planning call from `start_obs` with its full trace exported to CSV.

    The variance normalizer assumes planning history ("typical variance after
    t rollout steps"), so the traced call is preceded by `warmup_calls`
    untraced calls from the same state to prime it; with a cold identity
    table the uncertainty term would be orders of magnitude below the return
    scale and the penalty would be invisible in the trace.
    """
    normalizer = VarianceNormalizer.identity(ensemble.obs_dim, config.horizon)
    for _ in range(warmup_calls):
        plan(ensemble, start_obs, config, normalizer, rng)
    action, trace = plan(ensemble, start_obs, config, normalizer, rng)
    write_trace_csv(trace, trace_path)
    write_trace_states_csv(trace, states_path)
    return action, trace


def write_results_csv(records: list[EpisodeRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write("env,beta,seed,episode,return,cost\n")
        for r in records:
            fh.write(
                f"{r.env_id},{r.beta:.17g},{r.seed},{r.episode},"
                f"{r.episode_return:.17g},{r.cost}\n"
            )


def write_aggregate_csv(sweep: SweepResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("env,beta,mean_return,std_return,mean_cost,std_cost\n")
        for beta in sweep.betas:
            mr, sr, mc, sc = sweep.beta_stats(beta)
            fh.write(
                f"{sweep.env_id},{beta:.17g},{mr:.17g},{sr:.17g},{mc:.17g},{sc:.17g}\n"
            )


def write_heatmap_csv(grid_spec: GridSpec, values: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("dim1,dim2,omega\n")
        for i, v1 in enumerate(grid_spec.axis1()):
            for j, v2 in enumerate(grid_spec.axis2()):
                fh.write(f"{v1:.17g},{v2:.17g},{values[i, j]:.17g}\n")
