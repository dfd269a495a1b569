import json
from pathlib import Path

import numpy as np
import pytest

from clusterpurify.data import EmbeddingDataset, SyntheticConfig, generate_synthetic, sample_episode
from clusterpurify.simnet import init_net

ACCEPTANCE_LINES = []


def record_criterion(number, name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_dataset(rng, n_classes=6, per_class=12, dim=4, spread=1.0, noise=0.7, split="test"):
    classes = {}
    for c in range(n_classes):
        mu = rng.normal(0.0, spread, dim)
        classes[f"c{c}"] = mu + rng.normal(0.0, noise, (per_class, dim))
    return EmbeddingDataset(split, classes)


def perturbed_net(dim, hidden, rng, bias_std=0.1):
    """He-initialised net with non-zero biases so every parameter matters."""
    net = init_net(dim, hidden, rng)
    for b in net.biases:
        b += rng.normal(0.0, bias_std, b.shape)
    return net


def tiny_episode(seed, ways=3, shots=1, queries=5, dim=4):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n_classes=ways + 2, per_class=shots + queries + 2, dim=dim)
    return sample_episode(ds, ways, shots, queries, rng), rng


def net_as_lists(net):
    return [w.tolist() for w in net.weights], [b.tolist() for b in net.biases]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def zero_noise_data():
    cfg = SyntheticConfig(dimension=8, train_classes=10, test_classes=8, samples_per_class=25,
                          mean_scale=1.0, within_std=1e-9, seed=3)
    return generate_synthetic(cfg)


@pytest.fixture(scope="session")
def benchmark_cfg():
    path = Path(__file__).resolve().parents[1] / "src" / "clusterpurify" / "benchmark.json"
    return json.loads(path.read_text())
