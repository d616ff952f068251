"""Map model uncertainty over the cartpole state plane.

Trains a reduced ensemble on region-filtered data, then sweeps a grid over
(cart position, pole angle), sampling 200 normal-distributed actions per
cell and measuring the particle variance of 1-step rollouts. States below
the training-data divide (theta < -0.105) should light up with high
uncertainty. Writes heatmap.csv next to this script and prints a coarse
text rendering.
"""

import os

import numpy as np

from ugcem import data, ensemble, envs, harness
from ugcem.planner import CemConfig

SEED = 0

print("preparing filtered dataset and ensemble (reduced size) ...")
buf = data.filter_region(
    data.collect_random("cartpole", 4000, SEED), envs.default_region("cartpole")
)
ens, _ = ensemble.train_ensemble(
    buf, ensemble.TrainConfig(ensemble_size=4, epochs=10, hidden=(64, 64)), rng_seed=SEED
)

grid = harness.GridSpec(dim1=0, dim2=2, lo1=-0.3, hi1=0.3, lo2=-0.2, hi2=0.2, res1=13, res2=13)
print("computing 13x13 heatmap (200 actions per cell, 1-step rollouts) ...")
values = harness.uncertainty_heatmap(
    ens,
    grid,
    fixed_other_dims=np.zeros(4),
    config=CemConfig(env_id="cartpole"),
    rng=np.random.default_rng(SEED),
    n_actions=200,
)

out = os.path.join(os.path.dirname(__file__), "heatmap.csv")
harness.write_heatmap_csv(grid, values, out)
print(f"wrote {out}")

theta = grid.axis2()
ood = values[:, theta < -0.105].mean()
ind = values[:, theta >= -0.105].mean()
print(f"\nmean omega below the divide: {ood:.3f}, above: {ind:.3f} (ratio {ood / ind:.1f})")

shades = " .:-=+*#%@"
lo, hi = values.min(), values.max()
print("\npole angle -0.2 (left) to 0.2 (right), one row per cart position:")
for i in range(grid.res1):
    row = "".join(
        shades[min(int((values[i, j] - lo) / (hi - lo + 1e-12) * len(shades)), len(shades) - 1)]
        for j in range(grid.res2)
    )
    print(f"  x={grid.axis1()[i]:+.2f}  {row}")
