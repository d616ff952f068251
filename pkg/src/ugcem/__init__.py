"""Uncertainty-guided CEM planning over bootstrap ensembles of dynamics models.

The toolkit trains an ensemble of probabilistic neural networks on
region-filtered offline data and plans with a cross-entropy-method optimizer
whose objective penalizes action sequences that produce high-variance state
predictions during model rollouts, keeping the agent inside known regions of
the state space.
"""

from . import cli, config, data, ensemble, envs, harness, nn, planner

__all__ = ["cli", "config", "data", "ensemble", "envs", "harness", "nn", "planner"]
__version__ = "0.1.0"
