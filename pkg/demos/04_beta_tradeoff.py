"""The risk/return dial: sweep the uncertainty-penalty weight.

Runs short offline cartpole episodes at beta = 0 (plain expected-return
planning) and beta = 5 (strong uncertainty penalty) and compares return
against cost, where cost counts time steps spent below the training-data
divide. Higher beta should buy lower cost at some price in return. Reduced
episode counts and lengths keep this to a couple of minutes; the acceptance
suite runs the full protocol.
"""

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

print("sweeping beta over {0, 5}: 2 seeds x 2 episodes x 60 steps ...")
sweep = harness.run_sweep(
    "cartpole",
    ens,
    betas=[0.0, 5.0],
    seeds=[0, 1],
    episodes_per_cell=2,
    config=CemConfig(env_id="cartpole"),
    max_steps=60,
)

print("\n  beta   mean return   mean cost")
for beta in sweep.betas:
    mean_ret, _, mean_cost, _ = sweep.beta_stats(beta)
    print(f"  {beta:4.1f}   {mean_ret:11.1f}   {mean_cost:9.1f}")
print("\n(cost = steps with pole angle below -0.105 rad; never shown to the planner)")
