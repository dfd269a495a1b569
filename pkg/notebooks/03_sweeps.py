"""Sweeps over iterations T, selection size L and the negative-degree weight lambda."""

import numpy as np

from clusterpurify import (
    PcpConfig,
    TrainConfig,
    benchmark_synthetic_config,
    generate_synthetic,
    run_sweep,
    train,
)

train_ds, test_ds = generate_synthetic(benchmark_synthetic_config())
classifier, relation, _ = train(train_ds, TrainConfig.for_eval_shots(1, episodes_stage1=1500,
                                                                      episodes_stage2=1000))
base = PcpConfig(iterations=3, top_l=9, lam=0.8)

grids = {"T": [0, 1, 2, 3], "L": [1, 3, 5, 7, 9, 12, 15], "lambda": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]}
sweeps = {axis: run_sweep(axis, values, base, test_ds, classifier, relation, n_episodes=300, seed=0)
          for axis, values in grids.items()}

for axis, sweep in sweeps.items():
    means = np.array([rep.mean for _, rep in sweep.points])
    print(axis, {v: round(float(m), 2) for v, m in zip(sweep.values, 100 * means)})

# the same numbers as CSV, one file per axis
for axis, sweep in sweeps.items():
    sweep.write_csv(f"sweep_{axis}.csv")
