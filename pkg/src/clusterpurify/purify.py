"""Progressive cluster purification over query embeddings.

One run starts from support-mean prototypes, then repeats ``iterations``
times: assign every query to its best-scoring prototype, rank the members
of each cluster by a trust degree built from pairwise relation scores, and
pull each prototype toward its ``top_l`` most trusted members. A final
assignment with the last prototypes gives the prediction.

Degree of query ``i`` in cluster ``c``::

    d_pos[i] = mean r[i, j] over the other members j of c   (0 if alone)
    d_neg[i] = max over other non-empty clusters n of mean r[i, j], j in n
    d[i]     = d_pos[i] - lam * d_neg[i]

All ties (argmax over classes, degree ranking) go to the smaller index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Episode
from .simnet import SimilarityNet, ShapeError, forward, prototype_diffs

MODES = ("baseline", "ref_all", "sel_by_score", "intra_pos_only", "full")


class MissingClassError(ValueError):
    pass


@dataclass(frozen=True)
class Prototypes:
    vectors: np.ndarray
    t: int = 0

    @property
    def ways(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class ClusterAssignment:
    predicted: np.ndarray
    members: tuple

    @classmethod
    def from_predicted(cls, predicted, ways: int) -> "ClusterAssignment":
        predicted = np.asarray(predicted, dtype=np.intp)
        members = tuple(np.flatnonzero(predicted == n) for n in range(ways))
        return cls(predicted, members)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(m) for m in self.members])


@dataclass(frozen=True)
class DegreeTable:
    d_pos: np.ndarray
    d_neg: np.ndarray
    d: np.ndarray
    lam: float


@dataclass(frozen=True)
class PcpConfig:
    """Inference settings.

    ``lam`` only matters in ``full`` mode; ``baseline`` ignores
    ``iterations`` and classifies once with the support prototypes.
    """

    iterations: int = 3
    top_l: int = 9
    lam: float = 0.8
    mode: str = "full"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.top_l < 1:
            raise ValueError("top_l must be >= 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")

    @property
    def effective_iterations(self) -> int:
        return 0 if self.mode == "baseline" else self.iterations

    @property
    def needs_relation(self) -> bool:
        return self.mode in ("intra_pos_only", "full") and self.effective_iterations > 0


@dataclass
class PcpResult:
    """Final assignment plus the state before each classification step.

    ``prototypes[t]`` produced ``assignments[t]``; both lists have
    ``T + 1`` entries and the last assignment is the prediction.
    """

    assignment: ClusterAssignment
    prototypes: list = field(default_factory=list)
    assignments: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    degrees: list = field(default_factory=list)

    @property
    def predicted(self) -> np.ndarray:
        return self.assignment.predicted

    def trace_records(self, query_labels=None) -> list[dict]:
        records = []
        for protos, assign in zip(self.prototypes, self.assignments):
            rec = {
                "t": protos.t,
                "prototypes": protos.vectors.tolist(),
                "predicted": assign.predicted.tolist(),
            }
            if query_labels is not None:
                rec["accuracy"] = float(np.mean(assign.predicted == query_labels))
            records.append(rec)
        return records

    def write_trace(self, path, query_labels=None) -> None:
        """One JSON line per iteration: ``t``, ``prototypes``, ``predicted``, ``accuracy``."""
        with open(path, "w") as fh:
            for rec in self.trace_records(query_labels):
                fh.write(json.dumps(rec) + "\n")


def compute_prototypes(support: np.ndarray, support_labels: np.ndarray, ways: int) -> Prototypes:
    """Per-class mean of the support embeddings."""
    support = np.asarray(support, dtype=np.float64)
    support_labels = np.asarray(support_labels)
    vectors = np.empty((ways, support.shape[1]))
    for n in range(ways):
        rows = support[support_labels == n]
        if rows.shape[0] == 0:
            raise MissingClassError(f"class {n} has no support samples")
        vectors[n] = rows.mean(axis=0)
    return Prototypes(vectors, 0)


def classify(queries: np.ndarray, prototypes: Prototypes, classifier: SimilarityNet):
    """Score every query against every prototype and assign by argmax.

    Returns:
        ``(scores, assignment)`` with ``scores`` of shape ``(Q, N)``.
    """
    queries = np.asarray(queries, dtype=np.float64)
    protos = prototypes.vectors
    if queries.ndim != 2 or queries.shape[1] != protos.shape[1]:
        raise ShapeError(f"queries {queries.shape} vs prototypes {protos.shape}")
    q, n = queries.shape[0], protos.shape[0]
    scores = forward(classifier, prototype_diffs(queries, protos).reshape(q * n, -1)).reshape(q, n)
    # np.argmax returns the first maximum, i.e. the smallest class index on ties
    return scores, ClusterAssignment.from_predicted(np.argmax(scores, axis=1), n)


def relation_matrix(queries: np.ndarray, relation: SimilarityNet) -> np.ndarray:
    """Symmetric ``(Q, Q)`` matrix of pairwise relation scores."""
    queries = np.asarray(queries, dtype=np.float64)
    q = queries.shape[0]
    if q < 2:
        raise ValueError("relation_matrix needs at least 2 queries")
    if queries.shape[1] != relation.input_dim:
        raise ShapeError(f"queries have dimension {queries.shape[1]}, net expects {relation.input_dim}")
    iu, ju = np.triu_indices(q, k=1)
    upper = forward(relation, np.abs(queries[iu] - queries[ju]))
    r = np.empty((q, q))
    r[iu, ju] = upper
    r[ju, iu] = upper
    np.fill_diagonal(r, forward(relation, np.zeros(queries.shape[1])))
    return r


def degrees(assignment: ClusterAssignment, r: np.ndarray, lam: float) -> DegreeTable:
    """Positive, negative and fused trust degrees of every query."""
    pred = assignment.predicted
    q = pred.shape[0]
    ways = len(assignment.members)
    if r.shape != (q, q):
        raise ShapeError(f"relation matrix {r.shape} does not match {q} queries")
    sizes = assignment.sizes
    onehot = np.zeros((q, ways))
    onehot[np.arange(q), pred] = 1.0
    cluster_sums = r @ onehot  # (Q, N): sum of r[i, j] over j in cluster n

    rows = np.arange(q)
    own = sizes[pred]
    peers = own - 1
    own_sum = cluster_sums[rows, pred] - np.diag(r)
    d_pos = np.where(peers > 0, own_sum / np.maximum(peers, 1), 0.0)

    with np.errstate(invalid="ignore", divide="ignore"):
        means = cluster_sums / sizes[None, :]
    means[:, sizes == 0] = -np.inf
    means[rows, pred] = -np.inf
    d_neg = means.max(axis=1)
    d_neg = np.where(np.isfinite(d_neg), d_neg, 0.0)

    return DegreeTable(d_pos, d_neg, d_pos - lam * d_neg, lam)


def rank_members(members: np.ndarray, key: np.ndarray) -> np.ndarray:
    """Members sorted by ``key`` descending; ties keep the smaller query index."""
    members = np.sort(members)
    order = np.argsort(-key[members], kind="stable")
    return members[order]


def refine_prototypes(
    prototypes: Prototypes,
    assignment: ClusterAssignment,
    ranking_key: np.ndarray | None,
    queries: np.ndarray,
    top_l: int | None,
) -> Prototypes:
    """Average each prototype with its cluster's top-ranked members.

    ``new_p = (p + sum of selected) / (n_selected + 1)`` with
    ``n_selected = min(top_l, cluster size)``. ``top_l=None`` selects
    every member. Empty clusters keep their prototype.
    """
    new = prototypes.vectors.copy()
    for n, members in enumerate(assignment.members):
        if len(members) == 0:
            continue
        if top_l is None:
            chosen = members
        else:
            chosen = rank_members(members, ranking_key)[:top_l]
        new[n] = (prototypes.vectors[n] + queries[chosen].sum(axis=0)) / (len(chosen) + 1)
    return Prototypes(new, prototypes.t + 1)


def pcp_run(
    episode: Episode | None,
    classifier: SimilarityNet,
    relation: SimilarityNet | None,
    config: PcpConfig,
    *,
    support=None,
    support_labels=None,
    queries=None,
    ways=None,
    r=None,
) -> PcpResult:
    """Run the purification loop on one episode.

    Either pass an :class:`Episode` or the raw ``support``,
    ``support_labels``, ``queries`` and ``ways``. A precomputed relation
    matrix ``r`` may be supplied to skip the relation network.
    """
    if episode is not None:
        support, support_labels = episode.support, episode.support_labels
        queries, ways = episode.query, episode.ways
    queries = np.asarray(queries, dtype=np.float64)

    protos = compute_prototypes(support, support_labels, ways)
    result = PcpResult(assignment=None)
    t_max = config.effective_iterations

    if config.needs_relation and r is None:
        if relation is None:
            raise ValueError(f"mode {config.mode!r} needs a relation network")
        r = relation_matrix(queries, relation)

    for _ in range(t_max):
        scores, assign = classify(queries, protos, classifier)
        result.prototypes.append(protos)
        result.assignments.append(assign)
        result.scores.append(scores)

        if config.mode == "ref_all":
            protos = refine_prototypes(protos, assign, None, queries, None)
            continue
        if config.mode == "sel_by_score":
            key = scores[np.arange(len(queries)), assign.predicted]
        else:
            table = degrees(assign, r, config.lam if config.mode == "full" else 0.0)
            result.degrees.append(table)
            key = table.d if config.mode == "full" else table.d_pos
        protos = refine_prototypes(protos, assign, key, queries, config.top_l)

    scores, assign = classify(queries, protos, classifier)
    result.prototypes.append(protos)
    result.assignments.append(assign)
    result.scores.append(scores)
    result.assignment = assign
    return result
