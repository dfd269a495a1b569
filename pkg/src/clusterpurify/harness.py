"""Episode-averaged evaluation, paired sweeps and report I/O."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np

from .data import EmbeddingDataset, SyntheticConfig, sample_episode
from .purify import MODES, PcpConfig, pcp_run, relation_matrix
from .simnet import SimilarityNet

log = logging.getLogger(__name__)

Z95 = 1.96

# lambda used for the two benchmark profiles
LAMBDA_PROFILES = {"miniimagenet": 0.8, "tieredimagenet": 0.6}


@dataclass(frozen=True)
class EvalProtocol:
    """Test-time protocol defaults: 5-way, 15 queries per class, 10,000 episodes."""

    ways: int = 5
    shots: int = 1
    queries: int = 15
    iterations: int = 3
    top_l: int = 9
    lam: float = LAMBDA_PROFILES["miniimagenet"]
    mode: str = "full"
    episodes: int = 10_000
    seed: int = 0

    @classmethod
    def profile(cls, name: str, **kw) -> "EvalProtocol":
        return cls(lam=LAMBDA_PROFILES[name], **kw)

    def pcp_config(self) -> PcpConfig:
        return PcpConfig(self.iterations, self.top_l, self.lam, self.mode)


def mean_ci95(values) -> tuple[float, float]:
    """Mean and ``1.96 * sample_std / sqrt(n)`` (``n - 1`` denominator)."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n == 0:
        raise ValueError("need at least one value")
    mean = float(values.mean())
    if n == 1:
        return mean, 0.0
    return mean, float(Z95 * values.std(ddof=1) / np.sqrt(n))


@dataclass
class EvalReport:
    per_episode_accuracy: np.ndarray
    mean: float
    ci95: float
    seed: int
    config: dict = field(default_factory=dict)
    episodes_sha256: str = ""

    @property
    def n_episodes(self) -> int:
        return len(self.per_episode_accuracy)

    @classmethod
    def from_accuracies(cls, accs, seed, config, episodes_sha256="") -> "EvalReport":
        accs = np.asarray(accs, dtype=np.float64)
        mean, ci = mean_ci95(accs)
        return cls(accs, mean, ci, seed, dict(config), episodes_sha256)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "ci95": self.ci95,
            "n_episodes": self.n_episodes,
            "seed": self.seed,
            "config": self.config,
            "episodes_sha256": self.episodes_sha256,
            "per_episode_accuracy": self.per_episode_accuracy.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EvalReport":
        accs = np.asarray(raw["per_episode_accuracy"], dtype=np.float64)
        if accs.size != raw["n_episodes"]:
            raise ValueError("n_episodes does not match per_episode_accuracy")
        return cls(
            accs, raw["mean"], raw["ci95"], raw["seed"], raw["config"], raw.get("episodes_sha256", "")
        )

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def read_json(cls, path) -> "EvalReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "accuracy"])
            for i, a in enumerate(self.per_episode_accuracy):
                w.writerow([i, repr(float(a))])


def paired_difference(a: EvalReport, b: EvalReport) -> tuple[float, float]:
    """Mean and CI of ``a - b`` over episodes both reports share."""
    if a.episodes_sha256 and b.episodes_sha256 and a.episodes_sha256 != b.episodes_sha256:
        raise ValueError("reports were computed on different episode sequences")
    if a.n_episodes != b.n_episodes:
        raise ValueError("reports have different episode counts")
    return mean_ci95(a.per_episode_accuracy - b.per_episode_accuracy)


def sample_episodes(dataset, ways, shots, queries, n_episodes, seed):
    rng = np.random.default_rng(seed)
    return [sample_episode(dataset, ways, shots, queries, rng) for _ in range(n_episodes)]


def _digest(episodes) -> str:
    h = hashlib.sha256()
    for ep in episodes:
        h.update(ep.digest().encode())
    return h.hexdigest()


def evaluate(
    dataset: EmbeddingDataset,
    classifier: SimilarityNet,
    relation: SimilarityNet | None,
    pcp_config: PcpConfig,
    n_episodes: int,
    seed: int,
    ways: int = 5,
    shots: int = 1,
    queries: int = 15,
    *,
    episodes=None,
    relation_cache: dict | None = None,
) -> EvalReport:
    """Mean query accuracy of :func:`pcp_run` over sampled test episodes.

    The same ``seed`` always yields the same episode sequence, so reports
    computed with one seed are paired episode by episode.

    Args:
        episodes: Pre-sampled episodes; must be the ones ``seed`` produces.
        relation_cache: Dict reused across calls to keep relation matrices
            keyed by episode index.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if episodes is None:
        episodes = sample_episodes(dataset, ways, shots, queries, n_episodes, seed)
    accs = np.empty(n_episodes)
    for i, ep in enumerate(episodes):
        r = None
        if pcp_config.needs_relation:
            if relation_cache is not None:
                if i not in relation_cache:
                    relation_cache[i] = relation_matrix(ep.query, relation)
                r = relation_cache[i]
        pred = pcp_run(ep, classifier, relation, pcp_config, r=r).predicted
        accs[i] = np.mean(pred == ep.query_labels)
    config = {
        "ways": ways,
        "shots": shots,
        "queries": queries,
        "iterations": pcp_config.iterations,
        "top_l": pcp_config.top_l,
        "lambda": pcp_config.lam,
        "mode": pcp_config.mode,
        "episodes": n_episodes,
    }
    report = EvalReport.from_accuracies(accs, seed, config, _digest(episodes))
    log.info("evaluate %s seed=%d: %.4f +- %.4f", config, seed, report.mean, report.ci95)
    return report


AXES = ("T", "L", "lambda", "ablation")


@dataclass
class SweepReport:
    axis: str
    points: list  # (axis value, EvalReport)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        keys = [_axis_order(self.axis, v) for v, _ in self.points]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise ValueError("sweep values must be unique and strictly increasing")

    @property
    def values(self) -> list:
        return [v for v, _ in self.points]

    def report(self, value) -> EvalReport:
        for v, rep in self.points:
            if v == value:
                return rep
        raise KeyError(value)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["axis_value", "mean", "ci95"])
            for v, rep in self.points:
                w.writerow([v, repr(rep.mean), repr(rep.ci95)])

    def to_dict(self) -> dict:
        return {"axis": self.axis, "points": [{"value": v, "report": r.to_dict()} for v, r in self.points]}

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepReport":
        return cls(raw["axis"], [(p["value"], EvalReport.from_dict(p["report"])) for p in raw["points"]])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _axis_order(axis, value):
    return MODES.index(value) if axis == "ablation" else value


def _point_config(axis: str, value, base: PcpConfig) -> PcpConfig:
    if axis == "T":
        return replace(base, iterations=int(value))
    if axis == "L":
        return replace(base, top_l=int(value))
    if axis == "lambda":
        return replace(base, lam=float(value))
    return replace(base, mode=value)


def run_sweep(
    axis: str,
    values,
    base_config: PcpConfig,
    dataset: EmbeddingDataset,
    classifier: SimilarityNet,
    relation: SimilarityNet | None,
    n_episodes: int,
    seed: int,
    ways: int = 5,
    shots: int = 1,
    queries: int = 15,
) -> SweepReport:
    """Evaluate one config per axis value on a shared episode sequence."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    if axis == "ablation":
        values = sorted(values, key=MODES.index)
    episodes = sample_episodes(dataset, ways, shots, queries, n_episodes, seed)
    cache: dict = {}
    points = []
    for v in values:
        cfg = _point_config(axis, v, base_config)
        rep = evaluate(
            dataset, classifier, relation, cfg, n_episodes, seed, ways, shots, queries,
            episodes=episodes, relation_cache=cache,
        )
        points.append((v, rep))
    return SweepReport(axis, points)


def benchmark_config() -> dict:
    """The calibrated synthetic benchmark shipped with the package."""
    raw = json.loads(resources.files(__package__).joinpath("benchmark.json").read_text())
    return raw


def benchmark_synthetic_config() -> SyntheticConfig:
    return SyntheticConfig(**benchmark_config()["synthetic"])


def protocol_snapshot() -> dict:
    """Default evaluation and training settings as one flat-ish dict."""
    from .trainer import HIGHER_SHOT, TrainConfig

    proto = EvalProtocol()
    train = TrainConfig()
    return {
        "eval": asdict(proto),
        "lambda_profiles": dict(LAMBDA_PROFILES),
        "ci": {"z": Z95, "std_ddof": 1},
        "train": {"learning_rate": train.learning_rate, "queries": train.queries, "higher_shot": dict(HIGHER_SHOT)},
    }
