"""Plain-text run configuration: `key = value` lines, `#` comments.

Every command reads one of these files (all keys optional, defaults below),
applies any command-line overrides, and writes the effective configuration
back out as `config_echo.cfg` next to its outputs; re-running from the echo
reproduces the outputs byte for byte. Unknown keys are rejected rather than
silently ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from . import envs
from .ensemble import TrainConfig
from .planner import CemConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    env: str = "cartpole"
    seed: int = 0
    out: str = "runs"
    dataset: str = "dataset.txt"
    model: str = "ensemble.txt"
    collect_steps: int = 10000
    filter_enabled: bool = True
    region_threshold: float = envs.DEFAULT_CARTPOLE_THRESHOLD
    region_lo: float = envs.DEFAULT_PENDULUM_WEDGE[0]
    region_hi: float = envs.DEFAULT_PENDULUM_WEDGE[1]
    ensemble_size: int = 4
    hidden_layers: int = 3
    hidden_size: int = 200
    epochs: int = 50
    batch_size: int = 32
    lr: float = 0.001
    weight_decay: float = 5e-5
    horizon: int = 10
    iterations: int = 5
    elite_ratio: float = 0.3
    population: int = 200
    particles: int = 12
    alpha: float = 0.1
    propagation: str = "ts_inf"
    planner_dtype: str = "float32"
    pets_baseline: bool = False
    beta: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 5.0)
    seeds: tuple[int, ...] = (0, 1, 2)
    episodes: int = 10
    max_steps: int = 200
    workers: int = 1
    heatmap_dim1: int = 0
    heatmap_dim2: int = 2
    heatmap_lo1: float = -0.3
    heatmap_hi1: float = 0.3
    heatmap_lo2: float = -0.2
    heatmap_hi2: float = 0.2
    heatmap_res1: int = 21
    heatmap_res2: int = 21
    heatmap_actions: int = 200
    heatmap_horizon: int = 1
    trace_horizon: int = 5
    trace_beta: float = 1.0

    def validate(self) -> None:
        if self.env not in envs.ENV_IDS:
            raise ConfigError(f"unknown env: {self.env!r}")
        if self.propagation not in ("ts_inf", "ts_1"):
            raise ConfigError(f"unknown propagation: {self.propagation!r}")
        if self.planner_dtype not in ("float32", "float64"):
            raise ConfigError(f"unknown planner_dtype: {self.planner_dtype!r}")
        if any(b < 0 for b in self.beta):
            raise ConfigError("beta values must be >= 0")
        if not self.beta or not self.seeds:
            raise ConfigError("beta and seeds must be non-empty")

    def region(self) -> envs.RegionSpec:
        return envs.RegionSpec(
            env_id=self.env,
            angle_threshold=self.region_threshold,
            wedge_lo=self.region_lo,
            wedge_hi=self.region_hi,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            ensemble_size=self.ensemble_size,
            epochs=self.epochs,
            batch_size=self.batch_size,
            hidden=(self.hidden_size,) * self.hidden_layers,
            lr=self.lr,
            weight_decay=self.weight_decay,
        )

    def cem_config(self, beta: float = 0.0, horizon: int | None = None) -> CemConfig:
        return CemConfig(
            env_id=self.env,
            horizon=self.horizon if horizon is None else horizon,
            iterations=self.iterations,
            elite_ratio=self.elite_ratio,
            population=self.population,
            particles=self.particles,
            alpha=self.alpha,
            beta=beta,
            propagation=self.propagation,
            dtype=self.planner_dtype,
            disable_penalty=self.pets_baseline,
        )


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    f = _FIELDS[key]
    try:
        if f.type == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if f.type == "int":
            return int(raw)
        if f.type == "float":
            return float(raw)
        if f.type == "str":
            return raw
        if f.type == "tuple[float, ...]":
            return tuple(float(v) for v in raw.split(",") if v.strip() != "")
        if f.type == "tuple[int, ...]":
            return tuple(int(v) for v in raw.split(",") if v.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    raise ConfigError(f"unhandled type for {key!r}")


def parse_config_file(path) -> dict:
    """Parse a config file into a {key: typed value} dict; unknown keys raise."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, raw)
    return values


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def format_config(config: RunConfig) -> str:
    lines = [f"{name} = {_format_value(getattr(config, name))}" for name in _FIELDS]
    return "\n".join(lines) + "\n"


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build the effective RunConfig from an optional file plus overrides."""
    values = parse_config_file(path) if path is not None else {}
    if overrides:
        for key, val in overrides.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown override key {key!r}")
            values[key] = val
    config = RunConfig(**values)
    config.validate()
    return config


def pendulum_defaults() -> dict:
    """Preset overrides for the pendulum experiment (wedge region, obs grid)."""
    return {
        "env": "pendulum",
        "heatmap_dim1": 0,
        "heatmap_dim2": 1,
        "heatmap_lo1": -1.0,
        "heatmap_hi1": 1.0,
        "heatmap_lo2": -1.0,
        "heatmap_hi2": 1.0,
    }
