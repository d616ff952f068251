"""Offline transition datasets: collection, region filtering, normalization, io.

The dataset file format is line-oriented text:

    #ugcem-v1 env=<id> obs_dim=<n> act_dim=<m>
    <obs...>,<action...>,<next_obs...>        (one transition per line)

Values are written with 17 significant digits so float64 round-trips exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import envs

DATASET_MAGIC = "#ugcem-v1"
DEFAULT_CAPACITY = 10000
STD_FLOOR = 1e-8


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    next_obs: np.ndarray


@dataclass
class TransitionBuffer:
    """Ordered FIFO buffer of transitions with a fixed capacity."""

    env_id: str
    obs_dim: int
    act_dim: int
    capacity: int = DEFAULT_CAPACITY
    transitions: list[Transition] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transitions)

    def add(self, obs: np.ndarray, action: np.ndarray, next_obs: np.ndarray) -> None:
        obs = np.asarray(obs, dtype=np.float64)
        action = np.atleast_1d(np.asarray(action, dtype=np.float64))
        next_obs = np.asarray(next_obs, dtype=np.float64)
        if obs.shape != (self.obs_dim,) or next_obs.shape != (self.obs_dim,):
            raise ValueError("observation dimension mismatch")
        if action.shape != (self.act_dim,):
            raise ValueError("action dimension mismatch")
        if not (
            np.isfinite(obs).all() and np.isfinite(action).all() and np.isfinite(next_obs).all()
        ):
            raise ValueError("non-finite transition")
        self.transitions.append(Transition(obs, action, next_obs))
        if len(self.transitions) > self.capacity:
            del self.transitions[0]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stack the buffer into (obs, actions, next_obs) float64 arrays."""
        n = len(self.transitions)
        obs = np.empty((n, self.obs_dim))
        act = np.empty((n, self.act_dim))
        nxt = np.empty((n, self.obs_dim))
        for i, t in enumerate(self.transitions):
            obs[i] = t.obs
            act[i] = t.action
            nxt[i] = t.next_obs
        return obs, act, nxt


def collect_random(env_id: str, n_steps: int, rng_seed: int) -> TransitionBuffer:
    """Collect transitions by uniform-random interaction.

    Episodes reset on termination or after 200 steps. Deterministic for a
    given seed: the same generator drives resets and action draws in order.
    """
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    rng = np.random.default_rng(rng_seed)
    low, high = envs.action_bounds(env_id)
    buf = TransitionBuffer(
        env_id=env_id,
        obs_dim=envs.obs_dim(env_id),
        act_dim=envs.act_dim(env_id),
        capacity=max(DEFAULT_CAPACITY, n_steps),
    )
    state = envs.reset(env_id, rng)
    ep_len = 0
    while len(buf) < n_steps:
        action = rng.uniform(low, high)
        nxt, _, done = envs.step(env_id, state, float(action[0]))
        buf.add(envs.observe(env_id, state), action, envs.observe(env_id, nxt))
        ep_len += 1
        if done or ep_len >= envs.EPISODE_LENGTH:
            state = envs.reset(env_id, rng)
            ep_len = 0
        else:
            state = nxt
    return buf


def filter_region(buffer: TransitionBuffer, region: envs.RegionSpec) -> TransitionBuffer:
    """Drop every transition with either endpoint inside the forbidden region.

    Excluding both endpoints guarantees the dynamics model never sees
    forbidden-region states as inputs or as regression targets.
    """
    if len(buffer) == 0:
        raise ValueError("cannot filter an empty buffer")
    kept = [
        t
        for t in buffer.transitions
        if not (envs.region_mask(region, t.obs) or envs.region_mask(region, t.next_obs))
    ]
    if not kept:
        warnings.warn("region filter removed every transition", stacklevel=2)
    return TransitionBuffer(
        env_id=buffer.env_id,
        obs_dim=buffer.obs_dim,
        act_dim=buffer.act_dim,
        capacity=buffer.capacity,
        transitions=kept,
    )


@dataclass
class NormStats:
    """Per-dimension mean and population std of concatenated (obs, action) inputs."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean.astype(x.dtype)) / self.std.astype(x.dtype)


def fit_norm_stats(buffer: TransitionBuffer) -> NormStats:
    if len(buffer) < 2:
        raise ValueError("need at least 2 transitions to fit normalization stats")
    obs, act, _ = buffer.arrays()
    inputs = np.concatenate([obs, act], axis=1)
    mean = inputs.mean(axis=0)
    std = inputs.std(axis=0)  # population (1/n) convention
    return NormStats(mean=mean, std=np.maximum(std, STD_FLOOR))


def _fmt(values: np.ndarray) -> str:
    return ",".join(format(v, ".17g") for v in values)


def save(buffer: TransitionBuffer, path) -> None:
    with open(path, "w") as fh:
        fh.write(
            f"{DATASET_MAGIC} env={buffer.env_id} "
            f"obs_dim={buffer.obs_dim} act_dim={buffer.act_dim}\n"
        )
        for t in buffer.transitions:
            fh.write(_fmt(np.concatenate([t.obs, t.action, t.next_obs])) + "\n")


def load(path) -> TransitionBuffer:
    with open(path) as fh:
        header = fh.readline().strip()
        parts = header.split()
        if len(parts) != 4 or parts[0] != DATASET_MAGIC:
            raise ValueError(f"malformed dataset header: {header!r}")
        fields = dict(p.split("=", 1) for p in parts[1:])
        env_id = fields["env"]
        odim = int(fields["obs_dim"])
        adim = int(fields["act_dim"])
        width = 2 * odim + adim
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            vals = np.array([float(v) for v in line.split(",")])
            if vals.size != width:
                raise ValueError(
                    f"line {lineno}: expected {width} values, got {vals.size}"
                )
            rows.append(vals)
    buf = TransitionBuffer(
        env_id=env_id,
        obs_dim=odim,
        act_dim=adim,
        capacity=max(DEFAULT_CAPACITY, len(rows)),
    )
    for vals in rows:
        buf.add(vals[:odim], vals[odim : odim + adim], vals[odim + adim :])
    return buf
