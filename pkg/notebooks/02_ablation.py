"""Ablation ladder on paired episodes: which members should refine a prototype?"""

from clusterpurify import (
    MODES,
    PcpConfig,
    TrainConfig,
    benchmark_synthetic_config,
    generate_synthetic,
    paired_difference,
    run_sweep,
    train,
)

train_ds, test_ds = generate_synthetic(benchmark_synthetic_config())
classifier, relation, _ = train(train_ds, TrainConfig.for_eval_shots(1, episodes_stage1=1500,
                                                                      episodes_stage2=1000))

# every mode sees the same 300 episodes, so differences are paired
ladder = run_sweep("ablation", list(MODES), PcpConfig(), test_ds, classifier, relation,
                   n_episodes=300, seed=0)
for mode, rep in ladder.points:
    print(f"{mode:>15s}  {100 * rep.mean:6.2f} +- {100 * rep.ci95:.2f}")

# paired gain of the full degree over the plain classifier
gain, ci = paired_difference(ladder.report("full"), ladder.report("baseline"))
print(f"full - baseline: {100 * gain:.2f} +- {100 * ci:.2f} points")
