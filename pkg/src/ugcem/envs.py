"""Deterministic classic-control simulators with analytic rewards and region costs.

Two continuous-action environments are provided: a cartpole balancing task and a
pendulum swing-up task. Both are pure functions over value inputs, so they are
safe to call from any number of concurrent workers. Rewards are also exposed in
observation space (`analytic_reward`) so a planner can score model rollouts
without touching the simulator state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

CARTPOLE = "cartpole"
PENDULUM = "pendulum"
ENV_IDS = (CARTPOLE, PENDULUM)

# cartpole physics
CP_GRAVITY = 9.8
CP_MASS_CART = 1.0
CP_MASS_POLE = 0.1
CP_TOTAL_MASS = CP_MASS_CART + CP_MASS_POLE
CP_HALF_LENGTH = 0.5
CP_POLEMASS_LENGTH = CP_MASS_POLE * CP_HALF_LENGTH
CP_FORCE_SCALE = 10.0
CP_DT = 0.02
CP_X_LIMIT = 2.4
CP_THETA_LIMIT = 0.2095

# pendulum physics
PD_GRAVITY = 10.0
PD_MASS = 1.0
PD_LENGTH = 1.0
PD_DT = 0.05
PD_MAX_SPEED = 8.0
PD_MAX_TORQUE = 2.0

EPISODE_LENGTH = 200

DEFAULT_CARTPOLE_THRESHOLD = -0.105
DEFAULT_PENDULUM_WEDGE = (-3.0 * math.pi / 4.0, -math.pi / 4.0)


class CartpoleState(NamedTuple):
    x: float
    x_dot: float
    theta: float
    theta_dot: float


class PendulumState(NamedTuple):
    theta: float
    theta_dot: float


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return -((-theta + math.pi) % (2.0 * math.pi) - math.pi)


def _require_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite domain input: {v!r}")


def cartpole_terminal(state: CartpoleState) -> bool:
    return abs(state.x) > CP_X_LIMIT or abs(state.theta) > CP_THETA_LIMIT


def cartpole_step(state: CartpoleState, action: float) -> tuple[CartpoleState, float, bool]:
    """Advance the cartpole one Euler step under a force of `10 * action` newtons.

    Positions are updated with the pre-step velocities (explicit Euler). The
    reward is 1.0 whenever the *next* state is still within the termination
    bounds, 0.0 otherwise.
    """
    _require_finite(*state, action)
    a = min(max(action, -1.0), 1.0)
    force = CP_FORCE_SCALE * a
    sin_t = math.sin(state.theta)
    cos_t = math.cos(state.theta)

    temp = (force + CP_POLEMASS_LENGTH * state.theta_dot**2 * sin_t) / CP_TOTAL_MASS
    theta_acc = (CP_GRAVITY * sin_t - cos_t * temp) / (
        CP_HALF_LENGTH * (4.0 / 3.0 - CP_MASS_POLE * cos_t**2 / CP_TOTAL_MASS)
    )
    x_acc = temp - CP_POLEMASS_LENGTH * theta_acc * cos_t / CP_TOTAL_MASS

    nxt = CartpoleState(
        x=state.x + CP_DT * state.x_dot,
        x_dot=state.x_dot + CP_DT * x_acc,
        theta=state.theta + CP_DT * state.theta_dot,
        theta_dot=state.theta_dot + CP_DT * theta_acc,
    )
    done = cartpole_terminal(nxt)
    return nxt, 0.0 if done else 1.0, done


def pendulum_step(
    state: PendulumState, torque: float, dt: float = PD_DT
) -> tuple[PendulumState, float, bool]:
    """Advance the pendulum one semi-implicit Euler step (velocity first).

    Torque is clamped to [-2, 2] and angular velocity to [-8, 8]. The reward is
    the negative quadratic cost of the *post-step* state plus the torque cost,
    matching `analytic_reward` applied to the next observation.
    """
    _require_finite(*state, torque)
    u = min(max(torque, -PD_MAX_TORQUE), PD_MAX_TORQUE)

    theta_acc = (3.0 * PD_GRAVITY / (2.0 * PD_LENGTH)) * math.sin(state.theta) + (
        3.0 / (PD_MASS * PD_LENGTH**2)
    ) * u
    theta_dot = state.theta_dot + dt * theta_acc
    theta_dot = min(max(theta_dot, -PD_MAX_SPEED), PD_MAX_SPEED)
    theta = wrap_angle(state.theta + dt * theta_dot)

    nxt = PendulumState(theta=theta, theta_dot=theta_dot)
    reward = -(theta**2 + 0.1 * theta_dot**2 + 0.001 * u**2)
    return nxt, reward, False


def obs_dim(env_id: str) -> int:
    if env_id == CARTPOLE:
        return 4
    if env_id == PENDULUM:
        return 3
    raise ValueError(f"unknown env_id: {env_id!r}")


def act_dim(env_id: str) -> int:
    _check_env(env_id)
    return 1


def action_bounds(env_id: str) -> tuple[np.ndarray, np.ndarray]:
    """(low, high) arrays of shape (act_dim,)."""
    if env_id == CARTPOLE:
        return np.array([-1.0]), np.array([1.0])
    if env_id == PENDULUM:
        return np.array([-PD_MAX_TORQUE]), np.array([PD_MAX_TORQUE])
    raise ValueError(f"unknown env_id: {env_id!r}")


def _check_env(env_id: str) -> None:
    if env_id not in ENV_IDS:
        raise ValueError(f"unknown env_id: {env_id!r}")


def observe(env_id: str, state) -> np.ndarray:
    """Map a simulator state to its observation vector.

    Cartpole observations are the raw state [x, x_dot, theta, theta_dot]; the
    pendulum angle is embedded as [cos(theta), sin(theta), theta_dot] to remove
    the wrap discontinuity from learned-model regression targets.
    """
    if env_id == CARTPOLE:
        return np.array(state, dtype=np.float64)
    if env_id == PENDULUM:
        return np.array(
            [math.cos(state.theta), math.sin(state.theta), state.theta_dot], dtype=np.float64
        )
    raise ValueError(f"unknown env_id: {env_id!r}")


def reset(env_id: str, rng: np.random.Generator):
    """Draw an initial state: cartpole uniform in [-0.05, 0.05]^4, pendulum
    uniform over angle [-pi, pi] and velocity [-1, 1]."""
    if env_id == CARTPOLE:
        vals = rng.uniform(-0.05, 0.05, size=4)
        return CartpoleState(*vals)
    if env_id == PENDULUM:
        theta = rng.uniform(-math.pi, math.pi)
        theta_dot = rng.uniform(-1.0, 1.0)
        return PendulumState(theta=theta, theta_dot=theta_dot)
    raise ValueError(f"unknown env_id: {env_id!r}")


def step(env_id: str, state, action: float):
    if env_id == CARTPOLE:
        return cartpole_step(state, action)
    if env_id == PENDULUM:
        return pendulum_step(state, action)
    raise ValueError(f"unknown env_id: {env_id!r}")


def terminal_from_obs(env_id: str, obs: np.ndarray) -> np.ndarray:
    """Vectorized termination predicate on observations of shape (..., obs_dim)."""
    obs = np.asarray(obs)
    if env_id == CARTPOLE:
        return (np.abs(obs[..., 0]) > CP_X_LIMIT) | (np.abs(obs[..., 2]) > CP_THETA_LIMIT)
    if env_id == PENDULUM:
        return np.zeros(obs.shape[:-1], dtype=bool)
    raise ValueError(f"unknown env_id: {env_id!r}")


def reward_from_obs(env_id: str, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Vectorized observation-space reward, shapes (..., obs_dim) and (..., act_dim).

    This is the reward the simulator assigns to a transition landing on `obs`;
    in model rollouts it is evaluated at each predicted next observation.
    """
    obs = np.asarray(obs)
    action = np.asarray(action)
    if env_id == CARTPOLE:
        alive = ~terminal_from_obs(env_id, obs)
        return alive.astype(obs.dtype)
    if env_id == PENDULUM:
        theta = np.arctan2(obs[..., 1], obs[..., 0])
        u = np.clip(action[..., 0], -PD_MAX_TORQUE, PD_MAX_TORQUE)
        return -(theta**2 + 0.1 * obs[..., 2] ** 2 + 0.001 * u**2)
    raise ValueError(f"unknown env_id: {env_id!r}")


def analytic_reward(env_id: str, obs: np.ndarray, action) -> float:
    """Scalar observation-space reward for a single observation/action pair."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (obs_dim(env_id),):
        raise ValueError(f"bad observation shape {obs.shape} for {env_id}")
    act = np.atleast_1d(np.asarray(action, dtype=np.float64))
    return float(reward_from_obs(env_id, obs, act))


@dataclass(frozen=True)
class RegionSpec:
    """Out-of-distribution region: states excluded from training data.

    For cartpole the region is `theta < angle_threshold`; for the pendulum it
    is the open wedge `wedge_lo < theta < wedge_hi` (angle recovered from the
    observation via atan2).
    """

    env_id: str
    angle_threshold: float = DEFAULT_CARTPOLE_THRESHOLD
    wedge_lo: float = DEFAULT_PENDULUM_WEDGE[0]
    wedge_hi: float = DEFAULT_PENDULUM_WEDGE[1]

    def __post_init__(self):
        _check_env(self.env_id)


def default_region(env_id: str) -> RegionSpec:
    return RegionSpec(env_id=env_id)


def region_mask(region: RegionSpec, obs: np.ndarray) -> np.ndarray:
    """Vectorized membership test for observations of shape (..., obs_dim)."""
    obs = np.asarray(obs)
    if region.env_id == CARTPOLE:
        return obs[..., 2] < region.angle_threshold
    theta = np.arctan2(obs[..., 1], obs[..., 0])
    return (theta > region.wedge_lo) & (theta < region.wedge_hi)


def in_forbidden_region(obs: np.ndarray, region: RegionSpec) -> bool:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (obs_dim(region.env_id),):
        raise ValueError(f"bad observation shape {obs.shape} for {region.env_id}")
    return bool(region_mask(region, obs))
