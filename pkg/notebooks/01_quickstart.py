"""Quickstart: generate the synthetic benchmark, train both nets, purify one episode."""

import numpy as np

from clusterpurify import (
    PcpConfig,
    TrainConfig,
    benchmark_synthetic_config,
    generate_synthetic,
    pcp_run,
    sample_episode,
    train,
)

# 16-d Gaussian class clusters, 40 train classes and 20 unseen test classes
train_ds, test_ds = generate_synthetic(benchmark_synthetic_config())
print(train_ds.dim, len(train_ds.classes), len(test_ds.classes))

# a short training run; the shipped benchmark uses 3000 + 2000 episodes
cfg = TrainConfig.for_eval_shots(1, episodes_stage1=800, episodes_stage2=400, seed=0)
classifier, relation, log = train(train_ds, cfg)
print("stage-1 loss first/last 100:", np.mean(log.stage1[:100]), np.mean(log.stage1[-100:]))

# one 5-way 1-shot episode with 15 queries per class
ep = sample_episode(test_ds, 5, 1, 15, np.random.default_rng(3))
res = pcp_run(ep, classifier, relation, PcpConfig(iterations=3, top_l=9, lam=0.8))

# accuracy after each refinement step
for rec in res.trace_records(ep.query_labels):
    print(rec["t"], round(rec["accuracy"], 3))

# how far the prototypes moved
drift = np.linalg.norm(res.prototypes[-1].vectors - res.prototypes[0].vectors, axis=1)
drift
