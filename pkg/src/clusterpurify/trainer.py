"""Two-stage episodic training of the classifier and the relation net.

Stage 1 fits the classifier on query-to-prototype scores against the
support-mean prototypes. Stage 2 freezes the classifier and fits the
relation net on query-to-query pairs. Neither stage runs prototype
refinement: training always uses a single, unrefined pass.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import EmbeddingDataset, sample_episode
from .purify import PcpConfig, compute_prototypes, pcp_run
from .simnet import AdamState, SimilarityNet, adam_step, init_net, loss_inter, loss_intra

log = logging.getLogger(__name__)

# "Higher Shot": train with more support shots than the evaluation task uses
HIGHER_SHOT = {1: 5, 5: 10}


@dataclass(frozen=True)
class TrainConfig:
    ways: int = 5
    train_shots: int = 5
    eval_shots: int = 1
    queries: int = 15
    episodes_stage1: int = 20_000
    episodes_stage2: int = 10_000
    learning_rate: float = 1e-3
    seed: int = 0
    hidden_dims: tuple = (64, 64)
    validation_interval: int = 0
    validation_episodes: int = 200
    higher_shot: bool = True

    def __post_init__(self):
        if self.higher_shot and self.train_shots < self.eval_shots:
            raise ValueError("higher-shot training needs train_shots >= eval_shots")
        if min(self.ways, self.train_shots, self.eval_shots, self.queries) < 1:
            raise ValueError("ways, shots and queries must be positive")
        if self.episodes_stage1 < 0 or self.episodes_stage2 < 0:
            raise ValueError("episode budgets must be >= 0")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

    @classmethod
    def for_eval_shots(cls, eval_shots: int, **kw) -> "TrainConfig":
        """Config with the higher-shot training K for a given evaluation K."""
        return cls(eval_shots=eval_shots, train_shots=HIGHER_SHOT.get(eval_shots, eval_shots), **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d


@dataclass
class TrainLog:
    stage1: list = field(default_factory=list)
    stage2: list = field(default_factory=list)
    validation: list = field(default_factory=list)  # (stage, episode, accuracy)

    def rows(self):
        for stage, losses in ((1, self.stage1), (2, self.stage2)):
            for i, loss in enumerate(losses):
                yield i, stage, loss

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "stage", "loss"])
            for i, stage, loss in self.rows():
                w.writerow([i, stage, repr(float(loss))])


def _validate(dataset, classifier, relation, config: TrainConfig, pcp: PcpConfig) -> float:
    rng = np.random.default_rng([config.seed, 7919])
    accs = []
    for _ in range(config.validation_episodes):
        ep = sample_episode(dataset, config.ways, config.eval_shots, config.queries, rng)
        pred = pcp_run(ep, classifier, relation, pcp).predicted
        accs.append(np.mean(pred == ep.query_labels))
    return float(np.mean(accs))


def train_stage1(
    dataset: EmbeddingDataset,
    config: TrainConfig,
    validation: EmbeddingDataset | None = None,
    log_: TrainLog | None = None,
) -> tuple[SimilarityNet, TrainLog]:
    """Train the query-to-prototype classifier, one episode per Adam step.

    With a validation set and ``validation_interval > 0``, the returned net
    is the snapshot with the best baseline validation accuracy.
    """
    tlog = log_ if log_ is not None else TrainLog()
    rng = np.random.default_rng([config.seed, 1])
    net = init_net(dataset.dim, config.hidden_dims, rng)
    state = AdamState.for_net(net, config.learning_rate)
    validate = validation is not None and config.validation_interval > 0
    best, best_acc = net.copy(), -1.0
    baseline = PcpConfig(iterations=0, mode="baseline")

    for i in range(config.episodes_stage1):
        ep = sample_episode(dataset, config.ways, config.train_shots, config.queries, rng)
        protos = compute_prototypes(ep.support, ep.support_labels, ep.ways).vectors
        loss, grads = loss_inter(net, ep.query, ep.query_labels, protos)
        adam_step(net, grads, state)
        tlog.stage1.append(loss)
        if validate and (i + 1) % config.validation_interval == 0:
            acc = _validate(validation, net, None, config, baseline)
            tlog.validation.append((1, i + 1, acc))
            log.info("stage 1 episode %d: loss %.4f val acc %.4f", i + 1, loss, acc)
            if acc > best_acc:
                best, best_acc = net.copy(), acc
    if validate and best_acc >= 0:
        return best, tlog
    return net, tlog


def train_stage2(
    dataset: EmbeddingDataset,
    classifier: SimilarityNet,
    config: TrainConfig,
    validation: EmbeddingDataset | None = None,
    pcp: PcpConfig | None = None,
    log_: TrainLog | None = None,
) -> tuple[SimilarityNet, TrainLog]:
    """Train the relation net with the classifier held fixed."""
    tlog = log_ if log_ is not None else TrainLog()
    rng = np.random.default_rng([config.seed, 2])
    net = init_net(dataset.dim, config.hidden_dims, rng)
    state = AdamState.for_net(net, config.learning_rate)
    validate = validation is not None and config.validation_interval > 0
    pcp = pcp or PcpConfig()
    best, best_acc = net.copy(), -1.0

    for i in range(config.episodes_stage2):
        ep = sample_episode(dataset, config.ways, config.train_shots, config.queries, rng)
        loss, grads = loss_intra(net, ep.query, ep.query_labels)
        adam_step(net, grads, state)
        tlog.stage2.append(loss)
        if validate and (i + 1) % config.validation_interval == 0:
            acc = _validate(validation, classifier, net, config, pcp)
            tlog.validation.append((2, i + 1, acc))
            log.info("stage 2 episode %d: loss %.4f val acc %.4f", i + 1, loss, acc)
            if acc > best_acc:
                best, best_acc = net.copy(), acc
    if validate and best_acc >= 0:
        return best, tlog
    return net, tlog


def train(
    dataset: EmbeddingDataset,
    config: TrainConfig,
    validation: EmbeddingDataset | None = None,
    pcp: PcpConfig | None = None,
) -> tuple[SimilarityNet, SimilarityNet, TrainLog]:
    """Run both stages; returns ``(classifier, relation, log)``."""
    log.info("training with config %s", config.to_dict())
    tlog = TrainLog()
    classifier, _ = train_stage1(dataset, config, validation, tlog)
    relation, _ = train_stage2(dataset, classifier, config, validation, pcp, tlog)
    return classifier, relation, tlog
