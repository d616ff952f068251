"""Bootstrap ensemble of probabilistic dynamics models.

Each member is trained on its own with-replacement resample of the offline
buffer and predicts the *state delta* (next_obs - obs) in observation space;
inputs are normalized with statistics shared across members. The trained
ensemble is immutable and safe for concurrent read access.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import NormStats, TransitionBuffer, fit_norm_stats

ENSEMBLE_MAGIC = "#ugcem-ensemble-v1"


@dataclass(frozen=True)
class TrainConfig:
    ensemble_size: int = 4
    epochs: int = 50
    batch_size: int = 32
    hidden: tuple[int, ...] = (200, 200, 200)
    lr: float = 0.001
    weight_decay: float = 5e-5


@dataclass
class Ensemble:
    env_id: str
    obs_dim: int
    act_dim: int
    members: list[nn.MlpParams]
    norm: NormStats
    _casts: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.members)

    def __reduce__(self):
        # dtype cast caches are rebuilt lazily on the other side
        return (
            Ensemble,
            (self.env_id, self.obs_dim, self.act_dim, self.members, self.norm),
        )

    def cast(self, dtype) -> "CastedEnsemble":
        """Weights and normalization stats converted to `dtype`, cached."""
        key = np.dtype(dtype)
        if key not in self._casts:
            layers = [
                [(w.astype(key), b.astype(key)) for w, b in m.layers] for m in self.members
            ]
            self._casts[key] = CastedEnsemble(
                layers=layers,
                norm_mean=self.norm.mean.astype(key),
                norm_std=self.norm.std.astype(key),
                state_dim=self.obs_dim,
            )
        return self._casts[key]


@dataclass
class CastedEnsemble:
    """Per-member layer weights in a fixed dtype, for the planner's hot path."""

    layers: list[list[tuple[np.ndarray, np.ndarray]]]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    state_dim: int

    def forward_member(self, member: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Forward a normalized batch (R, in_dim) through one member."""
        h = x
        for w, b in self.layers[member][:-1]:
            h = np.maximum(h @ w + b, 0.0)
        w, b = self.layers[member][-1]
        out = h @ w + b
        s = self.state_dim
        return out[:, :s], nn.bound_logvar(out[:, s:])


def train_ensemble(
    buffer: TransitionBuffer, config: TrainConfig, rng_seed: int
) -> tuple[Ensemble, np.ndarray]:
    """Train the ensemble; returns it with the (members, epochs) NLL history.

    Member m is seeded by (rng_seed, m) and, in order, draws its bootstrap
    indices, its weight init, and then one shuffle per epoch, so results are
    reproducible and independent of any cross-member parallelism.
    """
    n = len(buffer)
    if n < config.batch_size:
        raise ValueError(f"buffer of {n} transitions is smaller than one batch")
    norm = fit_norm_stats(buffer)
    obs, act, nxt = buffer.arrays()
    inputs = norm.apply(np.concatenate([obs, act], axis=1))
    targets = nxt - obs

    spec = nn.MlpSpec(
        in_dim=buffer.obs_dim + buffer.act_dim,
        state_dim=buffer.obs_dim,
        hidden=config.hidden,
    )
    members = []
    history = np.empty((config.ensemble_size, config.epochs))
    for m in range(config.ensemble_size):
        rng = np.random.default_rng([rng_seed, m])
        boot = rng.integers(0, n, size=n)
        x_m, y_m = inputs[boot], targets[boot]
        params = nn.init_params(spec, rng)
        adam = nn.AdamState.for_params(
            params, lr=config.lr, weight_decay=config.weight_decay
        )
        for epoch in range(config.epochs):
            perm = rng.permutation(n)
            total = 0.0
            for start in range(0, n, config.batch_size):
                idx = perm[start : start + config.batch_size]
                loss, grad = nn.loss_and_grad(params, x_m[idx], y_m[idx])
                nn.adam_step(params, grad, adam)
                total += loss * idx.size
            history[m, epoch] = total / n
            if not np.isfinite(params.flat).all():
                raise FloatingPointError(
                    f"member {m} produced non-finite parameters at epoch {epoch}"
                )
        members.append(params)
    return (
        Ensemble(
            env_id=buffer.env_id,
            obs_dim=buffer.obs_dim,
            act_dim=buffer.act_dim,
            members=members,
            norm=norm,
        ),
        history,
    )


def predict_dist(
    ensemble: Ensemble, member: int, obs: np.ndarray, action: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of the next observation under one member.

    The member predicts a delta, so mean = obs + mu; variance is the
    exponentiated bounded log-variance (strictly positive).
    """
    if not 0 <= member < ensemble.size:
        raise IndexError(f"member {member} out of range for ensemble of {ensemble.size}")
    obs = np.asarray(obs, dtype=np.float64)
    action = np.atleast_1d(np.asarray(action, dtype=np.float64))
    x = ensemble.norm.apply(np.concatenate([obs, action], axis=-1))
    mu, logvar = nn.forward(ensemble.members[member], x)
    return obs + mu, np.exp(logvar)


def sample_next(
    ensemble: Ensemble,
    member: int,
    obs: np.ndarray,
    action: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw one next observation from the member's predictive Gaussian."""
    mean, var = predict_dist(ensemble, member, obs, action)
    return mean + np.sqrt(var) * rng.standard_normal(mean.shape)


def save_ensemble(ensemble: Ensemble, path) -> None:
    with open(path, "w") as fh:
        fh.write(
            f"{ENSEMBLE_MAGIC} env={ensemble.env_id} obs_dim={ensemble.obs_dim} "
            f"act_dim={ensemble.act_dim} members={ensemble.size}\n"
        )
        fh.write("norm_mean=" + ",".join(format(v, ".17g") for v in ensemble.norm.mean) + "\n")
        fh.write("norm_std=" + ",".join(format(v, ".17g") for v in ensemble.norm.std) + "\n")
        for member in ensemble.members:
            for line in nn.params_to_lines(member):
                fh.write(line + "\n")


def load_ensemble(path) -> Ensemble:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError("empty ensemble checkpoint")
    parts = lines[0].split()
    if not parts or parts[0] != ENSEMBLE_MAGIC:
        raise ValueError(f"malformed ensemble header: {lines[0]!r}")
    fields = dict(p.split("=", 1) for p in parts[1:])
    env_id = fields["env"]
    odim, adim, count = int(fields["obs_dim"]), int(fields["act_dim"]), int(fields["members"])
    if not lines[1].startswith("norm_mean=") or not lines[2].startswith("norm_std="):
        raise ValueError("malformed normalization block")
    mean = np.array([float(v) for v in lines[1][len("norm_mean=") :].split(",")])
    std = np.array([float(v) for v in lines[2][len("norm_std=") :].split(",")])
    if mean.size != odim + adim or std.size != odim + adim:
        raise ValueError("normalization dimension mismatch vs header")
    members = []
    idx = 3
    for _ in range(count):
        params, consumed = nn.params_from_lines(lines[idx:])
        if params.spec.in_dim != odim + adim or params.spec.state_dim != odim:
            raise ValueError("member architecture mismatch vs header")
        members.append(params)
        idx += consumed
    return Ensemble(
        env_id=env_id,
        obs_dim=odim,
        act_dim=adim,
        members=members,
        norm=NormStats(mean=mean, std=std),
    )
