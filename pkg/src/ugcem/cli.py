"""Command-line entry point.

Commands: collect, train, eval, sweep, heatmap, trace. Every command writes
`config_echo.cfg` into its output directory; re-running with that file as
`--config` (and the same artifact paths) reproduces the outputs byte for
byte.

Exit codes: 0 success, 2 configuration error, 3 missing or unreadable input
artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import data, envs, harness
from .config import ConfigError, RunConfig, format_config, load_config
from .ensemble import load_ensemble, save_ensemble, train_ensemble
from .planner import VarianceNormalizer


def _write_echo(config: RunConfig) -> None:
    os.makedirs(config.out, exist_ok=True)
    with open(os.path.join(config.out, "config_echo.cfg"), "w") as fh:
        fh.write(format_config(config))


def _load_model(config: RunConfig):
    if not os.path.exists(config.model):
        raise FileNotFoundError(f"model checkpoint not found: {config.model}")
    ens = load_ensemble(config.model)
    if ens.env_id != config.env:
        raise ConfigError(f"checkpoint env {ens.env_id!r} does not match config {config.env!r}")
    return ens


def cmd_collect(config: RunConfig) -> None:
    buf = data.collect_random(config.env, config.collect_steps, config.seed)
    removed = 0
    if config.filter_enabled:
        filtered = data.filter_region(buf, config.region())
        removed = len(buf) - len(filtered)
        buf = filtered
    parent = os.path.dirname(config.dataset)
    if parent:
        os.makedirs(parent, exist_ok=True)
    data.save(buf, config.dataset)
    print(f"collected {config.collect_steps} transitions, removed {removed}, "
          f"kept {len(buf)} -> {config.dataset}")


def cmd_train(config: RunConfig) -> None:
    if not os.path.exists(config.dataset):
        raise FileNotFoundError(f"dataset not found: {config.dataset}")
    buf = data.load(config.dataset)
    if buf.env_id != config.env:
        raise ConfigError(f"dataset env {buf.env_id!r} does not match config {config.env!r}")
    ens, history = train_ensemble(buf, config.train_config(), config.seed)
    parent = os.path.dirname(config.model)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_ensemble(ens, config.model)
    loss_path = os.path.join(config.out, "loss_history.csv")
    with open(loss_path, "w") as fh:
        fh.write("member,epoch,nll\n")
        for m in range(history.shape[0]):
            for e in range(history.shape[1]):
                fh.write(f"{m},{e},{history[m, e]:.17g}\n")
    print(f"trained {ens.size} members on {len(buf)} transitions -> {config.model}")
    print(f"final epoch NLL per member: "
          + ", ".join(f"{v:.4f}" for v in history[:, -1]))


def cmd_eval(config: RunConfig) -> None:
    ens = _load_model(config)
    beta = config.beta[0]
    records = []
    for seed in config.seeds:
        normalizer = VarianceNormalizer.identity(ens.obs_dim, config.horizon)
        for e in range(config.episodes):
            records.append(
                harness.run_episode(
                    config.env,
                    ens,
                    config.cem_config(beta=beta),
                    config.region(),
                    seed=[seed, e],
                    max_steps=config.max_steps,
                    normalizer=normalizer,
                    episode=e,
                )
            )
    path = os.path.join(config.out, "results.csv")
    harness.write_results_csv(records, path)
    rets = [r.episode_return for r in records]
    costs = [r.cost for r in records]
    print(f"beta={beta:g}: mean return {np.mean(rets):.2f}, mean cost {np.mean(costs):.2f} "
          f"over {len(records)} episodes -> {path}")


def cmd_sweep(config: RunConfig) -> None:
    ens = _load_model(config)
    sweep = harness.run_sweep(
        config.env,
        ens,
        betas=config.beta,
        seeds=config.seeds,
        episodes_per_cell=config.episodes,
        config=config.cem_config(),
        region=config.region(),
        max_steps=config.max_steps,
        workers=config.workers,
    )
    results_path = os.path.join(config.out, "results.csv")
    aggregate_path = os.path.join(config.out, "aggregate.csv")
    harness.write_results_csv(sweep.records, results_path)
    harness.write_aggregate_csv(sweep, aggregate_path)
    for beta in sweep.betas:
        mr, _, mc, _ = sweep.beta_stats(beta)
        print(f"beta={beta:g}: mean return {mr:.2f}, mean cost {mc:.2f}")
    print(f"wrote {results_path} and {aggregate_path}")


def cmd_heatmap(config: RunConfig) -> None:
    ens = _load_model(config)
    grid = harness.GridSpec(
        dim1=config.heatmap_dim1,
        dim2=config.heatmap_dim2,
        lo1=config.heatmap_lo1,
        hi1=config.heatmap_hi1,
        lo2=config.heatmap_lo2,
        hi2=config.heatmap_hi2,
        res1=config.heatmap_res1,
        res2=config.heatmap_res2,
    )
    values = harness.uncertainty_heatmap(
        ens,
        grid,
        fixed_other_dims=np.zeros(ens.obs_dim),
        config=config.cem_config(horizon=config.heatmap_horizon),
        rng=np.random.default_rng(config.seed),
        n_actions=config.heatmap_actions,
        horizon=config.heatmap_horizon,
    )
    path = os.path.join(config.out, "heatmap.csv")
    harness.write_heatmap_csv(grid, values, path)
    print(f"heatmap {grid.res1}x{grid.res2}, omega range "
          f"[{values.min():.3g}, {values.max():.3g}] -> {path}")


def _divide_state(config: RunConfig) -> np.ndarray:
    """Observation on the training-region boundary used by the trace command."""
    if config.env == envs.CARTPOLE:
        return np.array([0.0, 0.0, config.region_threshold, 0.0])
    theta = config.region_hi
    return np.array([math.cos(theta), math.sin(theta), 0.0])


def cmd_trace(config: RunConfig) -> None:
    ens = _load_model(config)
    trace_path = os.path.join(config.out, "trace.csv")
    states_path = os.path.join(config.out, "trace_states.csv")
    harness.plan_trace_experiment(
        ens,
        _divide_state(config),
        config.cem_config(beta=config.trace_beta, horizon=config.trace_horizon),
        rng=np.random.default_rng(config.seed),
        trace_path=trace_path,
        states_path=states_path,
    )
    print(f"wrote {trace_path} and {states_path}")


COMMANDS = {
    "collect": cmd_collect,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "heatmap": cmd_heatmap,
    "trace": cmd_trace,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ugcem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None, help="path to a key=value config file")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--out", default=None, help="output directory")
        cmd.add_argument("--workers", type=int, default=None)
        cmd.add_argument("--beta", default=None, help="comma-separated beta list")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.beta is not None:
        try:
            overrides["beta"] = tuple(float(v) for v in args.beta.split(","))
        except ValueError:
            print(f"error: bad --beta value {args.beta!r}", file=sys.stderr)
            return 2
    try:
        config = load_config(args.config, overrides)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        _write_echo(config)
        COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # malformed artifact contents
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
