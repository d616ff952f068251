"""Collect offline data, filter the forbidden region, train a small ensemble.

Walks the full data path: random-interaction collection, region filtering
(pole angle below -0.105 rad removed from cartpole training data), input
normalization, and bootstrap-ensemble training. Uses a reduced network and
epoch count so it finishes in under a minute; the production settings live
in configs/cartpole.cfg.
"""

import numpy as np

from ugcem import data, ensemble, envs

SEED = 0

print("collecting 4000 cartpole transitions by random interaction ...")
raw = data.collect_random("cartpole", 4000, SEED)
region = envs.default_region("cartpole")
buf = data.filter_region(raw, region)
print(f"  removed {len(raw) - len(buf)} transitions with an endpoint below "
      f"{region.angle_threshold} rad, kept {len(buf)}")

stats = data.fit_norm_stats(buf)
print(f"  input mean: {np.round(stats.mean, 3)}")
print(f"  input std:  {np.round(stats.std, 3)}")

print("\ntraining a 4-member bootstrap ensemble (small net, 10 epochs) ...")
cfg = ensemble.TrainConfig(ensemble_size=4, epochs=10, hidden=(64, 64))
ens, history = ensemble.train_ensemble(buf, cfg, rng_seed=SEED)
for m in range(ens.size):
    print(f"  member {m}: NLL {history[m, 0]:7.3f} -> {history[m, -1]:7.3f}")

print("\nmember disagreement in vs out of the training region:")
rng = np.random.default_rng(1)
for label, theta in [("in-distribution (theta=0)", 0.0), ("out-of-distribution (theta=-0.3)", -0.3)]:
    obs = np.array([0.0, 0.0, theta, 0.0])
    disagreement = []
    for _ in range(100):
        action = rng.uniform(-1, 1, size=1)
        means = np.stack([ensemble.predict_dist(ens, m, obs, action)[0] for m in range(ens.size)])
        disagreement.append(means.var(axis=0).mean())
    print(f"  {label:34s} mean member variance {np.mean(disagreement):.2e}")
