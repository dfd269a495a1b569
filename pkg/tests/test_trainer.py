import csv

import numpy as np
import pytest

import clusterpurify.purify as purify
from clusterpurify.data import SyntheticConfig, generate_synthetic
from clusterpurify.simnet import init_net
from clusterpurify.trainer import HIGHER_SHOT, TrainConfig, TrainLog, _validate, train, train_stage1, train_stage2


@pytest.fixture(scope="module")
def small_data():
    cfg = SyntheticConfig(dimension=8, train_classes=12, test_classes=8, samples_per_class=30,
                          within_std=0.8, seed=61)
    return generate_synthetic(cfg)


def small_config(**kw):
    base = dict(ways=5, train_shots=5, eval_shots=1, queries=10, episodes_stage1=300,
                episodes_stage2=300, seed=61, hidden_dims=(16, 16))
    base.update(kw)
    return TrainConfig(**base)


def test_zero_episodes_returns_initialisation(small_data):
    train_ds, _ = small_data
    cfg = small_config(episodes_stage1=0, episodes_stage2=0)
    classifier, log = train_stage1(train_ds, cfg)
    assert classifier.equals(init_net(8, (16, 16), np.random.default_rng([61, 1])))
    relation, _ = train_stage2(train_ds, classifier, cfg)
    assert relation.equals(init_net(8, (16, 16), np.random.default_rng([61, 2])))
    assert log.stage1 == []


def test_stage1_loss_decreases_on_zero_noise(zero_noise_data):
    train_ds, _ = zero_noise_data
    _, log = train_stage1(train_ds, small_config(episodes_stage1=600, queries=5))
    assert np.mean(log.stage1[-100:]) < np.mean(log.stage1[:100])


def test_stage2_loss_decreases_seed61(small_data):
    train_ds, _ = small_data
    cfg = small_config(episodes_stage1=0, episodes_stage2=600)
    classifier, _ = train_stage1(train_ds, cfg)
    _, log = train_stage2(train_ds, classifier, cfg)
    assert np.mean(log.stage2[-100:]) < np.mean(log.stage2[:100])


def test_bit_identical_reruns(small_data):
    train_ds, _ = small_data
    a = train(train_ds, small_config(episodes_stage1=50, episodes_stage2=50))
    b = train(train_ds, small_config(episodes_stage1=50, episodes_stage2=50))
    assert a[0].equals(b[0]) and a[1].equals(b[1])
    assert a[2].stage1 == b[2].stage1 and a[2].stage2 == b[2].stage2


def test_stage2_leaves_classifier_untouched(small_data):
    train_ds, _ = small_data
    cfg = small_config(episodes_stage1=30, episodes_stage2=30)
    classifier, _ = train_stage1(train_ds, cfg)
    before = b"".join(p.tobytes() for p in classifier.params())
    train_stage2(train_ds, classifier, cfg)
    assert b"".join(p.tobytes() for p in classifier.params()) == before


def test_training_never_refines(small_data, monkeypatch):
    def boom(*a, **k):
        raise AssertionError("refine_prototypes called during training")

    monkeypatch.setattr(purify, "refine_prototypes", boom)
    train(small_data[0], small_config(episodes_stage1=20, episodes_stage2=20))


def test_losses_finite_non_negative(small_data):
    _, _, log = train(small_data[0], small_config(episodes_stage1=100, episodes_stage2=100))
    losses = np.array(log.stage1 + log.stage2)
    assert np.all(np.isfinite(losses)) and np.all(losses >= 0)


def test_validation_keeps_best_snapshot(small_data):
    train_ds, val_ds = small_data
    val_ds = type(val_ds)("validation", val_ds.classes)
    cfg = small_config(episodes_stage1=120, episodes_stage2=0, validation_interval=30, validation_episodes=20)
    classifier, log = train_stage1(train_ds, cfg, validation=val_ds)
    accs = [acc for stage, _, acc in log.validation if stage == 1]
    assert len(accs) == 4
    baseline = purify.PcpConfig(iterations=0, mode="baseline")
    assert _validate(val_ds, classifier, None, cfg, baseline) == max(accs)


def test_higher_shot_defaults():
    assert HIGHER_SHOT == {1: 5, 5: 10}
    assert TrainConfig.for_eval_shots(1).train_shots == 5
    assert TrainConfig.for_eval_shots(5).train_shots == 10
    with pytest.raises(ValueError):
        TrainConfig(train_shots=1, eval_shots=5)


def test_trainlog_csv(tmp_path):
    log = TrainLog(stage1=[0.5, 0.25], stage2=[0.125])
    log.write_csv(tmp_path / "log.csv")
    with open(tmp_path / "log.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows == [["episode", "stage", "loss"], ["0", "1", "0.5"], ["1", "1", "0.25"], ["0", "2", "0.125"]]
